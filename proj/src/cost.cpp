#include "dcic/cost.hpp"

#include <iomanip>
#include <sstream>

#include "dcic/error.hpp"

namespace dcic {

double layer_flops(const LayerRow& r) {
  const double out = static_cast<double>(r.out_channels) * r.out_h * r.out_w;
  if (r.op == "conv") return out * r.kernel * r.kernel * r.in_channels;
  if (r.op == "fc") return static_cast<double>(r.in_channels) * r.out_channels;
  return 0.0;
}

double layer_elementwise(const LayerRow& r) {
  const double out = static_cast<double>(r.out_channels) * r.out_h * r.out_w;
  if (r.op == "conv" || r.op == "fc") return r.bias ? out : 0.0;
  if (r.op == "bn" || r.op == "relu" || r.op == "add" || r.op == "scale") return out;
  if (r.op == "maxpool") return out * r.kernel * r.kernel;
  if (r.op == "avgpool") return static_cast<double>(r.in_channels) * r.in_h * r.in_w;
  if (r.op == "upsample") return 4.0 * out;
  if (r.op == "nearest") return 0.0;
  fail(Errc::invalid_argument, "no cost rule for op " + r.op);
}

double CostReport::flops_with_prefix(const std::string& prefix) const {
  double s = 0.0;
  for (const LayerCost& l : layers)
    if (l.name.starts_with(prefix)) s += l.flops;
  return s;
}

CostReport cost_of(const std::string& subject, int in_channels, int in_h, int in_w, const std::vector<LayerRow>& rows) {
  CostReport rep{subject, in_channels, in_h, in_w, {}, 0.0, 0.0, 0};
  for (const LayerRow& r : rows) {
    rep.layers.push_back({r.name, r.op, layer_flops(r), layer_elementwise(r), r.params});
    rep.total_flops += rep.layers.back().flops;
    rep.total_elementwise += rep.layers.back().elementwise;
    rep.total_params += r.params;
  }
  return rep;
}

CostReport count_flops(const NetworkSpec& spec, int in_h, int in_w) {
  return cost_of(spec.variant, spec.input_channels, in_h, in_w, spec_summary(spec, in_h, in_w));
}

std::vector<LayerRow> compressor_summary(const CompressorConfig& k, int h, int w, CompressorPart part) {
  require(h > 0 && w > 0 && h % 8 == 0 && w % 8 == 0, Errc::invalid_argument,
          "compressor cost: dimensions must be positive and divisible by 8");
  std::vector<LayerRow> rows;
  int c = 0;
  auto conv = [&](const std::string& name, int cout, int kernel, int stride) {
    const ConvGeometry g = conv_geometry(h, w, kernel, stride, 1, Padding::same);
    rows.push_back({name, "conv", c, cout, g.out_h, g.out_w, kernel, stride, 1, true,
                    static_cast<std::size_t>(c) * cout * kernel * kernel + cout, h, w});
    h = g.out_h;
    w = g.out_w;
    c = cout;
  };
  auto simple = [&](const std::string& name, const std::string& op) { rows.push_back({name, op, c, c, h, w, 1, 1, 1, false, 0, h, w}); };
  auto residuals = [&](const std::string& prefix) {
    for (int r = 1; r <= k.residual_units; ++r) {
      const std::string n = prefix + "/res" + std::to_string(r);
      conv(n + "/conv1", c, 3, 1);
      simple(n + "/relu", "relu");
      conv(n + "/conv2", c, 3, 1);
      simple(n + "/add", "add");
    }
  };
  if (part != CompressorPart::decoder) {
    c = 3;
    simple("encoder/scale", "scale");
    conv("encoder/conv1", k.encoder_width1, 5, 2);
    simple("encoder/conv1/relu", "relu");
    conv("encoder/conv2", k.encoder_width2, 5, 2);
    simple("encoder/conv2/relu", "relu");
    residuals("encoder");
    conv("encoder/conv3", k.channels, 5, 2);
  } else {
    h /= 8;
    w /= 8;
  }
  if (part != CompressorPart::encoder) {
    c = k.channels;
    conv("decoder/conv1", k.decoder_width1, 5, 1);
    simple("decoder/conv1/relu", "relu");
    residuals("decoder");
    const int widths[3] = {k.decoder_width2, k.decoder_width3, 3};
    for (int i = 0; i < 3; ++i) {
      const std::string n = "decoder/up" + std::to_string(i + 1);
      rows.push_back({n + "/nearest", "nearest", c, c, 2 * h, 2 * w, 1, 1, 1, false, 0, h, w});
      h *= 2;
      w *= 2;
      conv(n, widths[i], 5, 1);
      if (i < 2) simple(n + "/relu", "relu");
    }
    simple("decoder/scale", "scale");
  }
  return rows;
}

CostReport count_flops(const CompressorConfig& k, int h, int w, CompressorPart part) {
  const char* name = part == CompressorPart::encoder ? "encoder" : part == CompressorPart::decoder ? "decoder" : "compressor";
  const int in_c = part == CompressorPart::decoder ? k.channels : 3;
  const int in_h = part == CompressorPart::decoder ? h / 8 : h, in_w = part == CompressorPart::decoder ? w / 8 : w;
  return cost_of(std::string(name) + "(C=" + std::to_string(k.channels) + ")", in_c, in_h, in_w, compressor_summary(k, h, w, part));
}

std::string report_text(const CostReport& r) {
  std::ostringstream os;
  os << "# " << kFlopConvention << '\n';
  os << "# " << r.subject << " input " << r.in_h << 'x' << r.in_w << 'x' << r.in_channels << '\n';
  os << "layer\top\tflops\telementwise\tparams\n";
  os << std::setprecision(12);
  for (const LayerCost& l : r.layers) os << l.name << '\t' << l.op << '\t' << l.flops << '\t' << l.elementwise << '\t' << l.params << '\n';
  os << "total\t-\t" << r.total_flops << '\t' << r.total_elementwise << '\t' << r.total_params << '\n';
  return os.str();
}

std::string report_kv(const CostReport& r) {
  std::ostringstream os;
  os << "subject=" << r.subject << '\n'
     << "input=" << r.in_h << 'x' << r.in_w << 'x' << r.in_channels << '\n'
     << "total_flops=" << std::setprecision(12) << r.total_flops << '\n'
     << "total_elementwise=" << r.total_elementwise << '\n'
     << "total_params=" << r.total_params << '\n'
     << "convention=" << kFlopConvention << '\n';
  return os.str();
}

CostComparison cost_comparison(const NetworkSpec& direct, const CompressorConfig& codec, const NetworkSpec& rgb, int h, int w) {
  require(h % 8 == 0 && w % 8 == 0, Errc::invalid_argument, "image size must be divisible by 8");
  return {count_flops(direct, h / 8, w / 8).total_flops, count_flops(codec, h, w, CompressorPart::decoder).total_flops,
          count_flops(rgb, h, w).total_flops};
}

std::string comparison_text(const CostComparison& c, const std::string& direct_name, const std::string& rgb_name) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "pipeline\tflops\n";
  os << direct_name << "\t" << c.direct << '\n';
  os << "decoder+" << rgb_name << "\t" << c.pipeline() << '\n';
  os << "ratio\t" << c.ratio() << '\n';
  return os.str();
}

}  // namespace dcic
