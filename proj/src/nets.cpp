#include "dcic/nets.hpp"

#include <cmath>
#include <sstream>

#include "dcic/error.hpp"

namespace dcic {

namespace {

struct Counts {
  bool rgb;
  int n2, n3, n4, n5;
};

Counts variant_counts(std::string_view v) {
  if (v == "ResNet-50") return {true, 3, 4, 6, 3};
  if (v == "ResNet-71") return {true, 3, 4, 13, 3};
  if (v == "cResNet-39") return {false, 0, 4, 6, 3};
  if (v == "cResNet-51") return {false, 0, 4, 10, 3};
  if (v == "cResNet-72") return {false, 0, 4, 17, 3};
  fail(Errc::invalid_argument, "unknown network variant " + std::string(v));
}

int stage_out(const StageSpec& s) { return 4 * s.width; }

}  // namespace

std::vector<std::string> classifier_variants() { return {"ResNet-50", "ResNet-71", "cResNet-39", "cResNet-51", "cResNet-72"}; }

int NetworkSpec::output_stride() const {
  int s = has_root ? 4 : 1;
  for (const StageSpec& st : stages) s *= st.stride;
  return s;
}

std::size_t NetworkSpec::bottleneck_blocks() const {
  std::size_t n = 0;
  for (const StageSpec& s : stages) n += static_cast<std::size_t>(s.blocks);
  return n;
}

NetworkSpec classifier_spec(std::string_view variant, int num_classes, int input_channels, int base_width) {
  const Counts c = variant_counts(variant);
  require(num_classes >= 1 && input_channels >= 1 && base_width >= 1, Errc::invalid_argument,
          "network needs positive classes, input channels and width");
  NetworkSpec s;
  s.variant = std::string(variant);
  s.family = c.rgb ? Family::rgb : Family::compressed;
  s.has_root = c.rgb;
  s.input_channels = input_channels;
  s.num_classes = num_classes;
  s.root_width = base_width;
  if (c.rgb) s.stages.push_back({"conv2", c.n2, base_width, 1, 1});
  // the representation is already at 1/8 resolution, so conv3_1 keeps it
  s.stages.push_back({"conv3", c.n3, 2 * base_width, c.rgb ? 2 : 1, 1});
  s.stages.push_back({"conv4", c.n4, 4 * base_width, 2, 1});
  s.stages.push_back({"conv5", c.n5, 8 * base_width, 2, 1});
  return s;
}

NetworkSpec segmenter_spec(std::string_view variant, int num_classes, int input_channels, int base_width) {
  require(variant.ends_with("-d"), Errc::invalid_argument, "segmenter variant must end in -d: " + std::string(variant));
  NetworkSpec s = classifier_spec(variant.substr(0, variant.size() - 2), num_classes, input_channels, base_width);
  s.variant = std::string(variant);
  s.head = Head::aspp;
  s.aspp_rates = {6, 12, 18, 24};
  for (StageSpec& st : s.stages) {
    if (st.name == "conv4") st.stride = 1, st.dilation = 2;
    if (st.name == "conv5") st.stride = 1, st.dilation = 4;
  }
  return s;
}

NetworkSpec network_spec(std::string_view variant, int num_classes, int input_channels, int base_width) {
  return variant.ends_with("-d") ? segmenter_spec(variant, num_classes, input_channels, base_width)
                                 : classifier_spec(variant, num_classes, input_channels, base_width);
}

std::vector<LayerRow> spec_summary(const NetworkSpec& spec, int in_h, int in_w) {
  require(in_h > 0 && in_w > 0, Errc::invalid_argument, "spec_summary: input dims must be positive");
  std::vector<LayerRow> rows;
  int h = in_h, w = in_w, c = spec.input_channels;
  auto conv = [&](const std::string& name, int cout, int k, int stride, int dil, bool bias) {
    const ConvGeometry g = conv_geometry(h, w, k, stride, dil, Padding::same);
    rows.push_back({name, "conv", c, cout, g.out_h, g.out_w, k, stride, dil, bias,
                    static_cast<std::size_t>(c) * cout * k * k + (bias ? cout : 0), h, w});
    h = g.out_h;
    w = g.out_w;
    c = cout;
  };
  auto simple = [&](const std::string& name, const std::string& op, std::size_t params = 0) {
    rows.push_back({name, op, c, c, h, w, 1, 1, 1, false, params, h, w});
  };
  if (spec.has_root) {
    conv("conv1", spec.root_width, 7, 2, 1, false);
    simple("conv1/bn", "bn", 2 * static_cast<std::size_t>(c));
    simple("conv1/relu", "relu");
    const ConvGeometry g = conv_geometry(h, w, 3, 2, 1, Padding::same);
    require(h >= 3 && w >= 3, Errc::shape_mismatch, "input too small for the root pool");
    rows.push_back({"pool1", "maxpool", c, c, g.out_h, g.out_w, 3, 2, 1, false, 0, h, w});
    h = g.out_h;
    w = g.out_w;
  }
  for (const StageSpec& st : spec.stages)
    for (int b = 1; b <= st.blocks; ++b) {
      const std::string n = st.name + "_" + std::to_string(b);
      const int stride = b == 1 ? st.stride : 1;
      const int in_c = c, in_h0 = h, in_w0 = w;
      conv(n + "/conv1", st.width, 1, stride, 1, false);
      simple(n + "/conv1/bn", "bn", 2 * static_cast<std::size_t>(c));
      simple(n + "/conv1/relu", "relu");
      conv(n + "/conv2", st.width, 3, 1, st.dilation, false);
      simple(n + "/conv2/bn", "bn", 2 * static_cast<std::size_t>(c));
      simple(n + "/conv2/relu", "relu");
      conv(n + "/conv3", stage_out(st), 1, 1, 1, false);
      simple(n + "/conv3/bn", "bn", 2 * static_cast<std::size_t>(c));
      if (in_c != stage_out(st) || stride != 1) {
        const int oh = h, ow = w, oc = c;
        h = in_h0;
        w = in_w0;
        c = in_c;
        conv(n + "/shortcut", stage_out(st), 1, stride, 1, false);
        simple(n + "/shortcut/bn", "bn", 2 * static_cast<std::size_t>(c));
        require(h == oh && w == ow && c == oc, Errc::shape_mismatch, "shortcut shape");
      }
      simple(n + "/add", "add");
      simple(n + "/relu", "relu");
    }
  if (spec.head == Head::classifier) {
    rows.push_back({"pool5", "avgpool", c, c, 1, 1, 1, 1, 1, false, 0, h, w});
    rows.push_back({"logits", "fc", c, spec.num_classes, 1, 1, 1, 1, 1, true,
                    static_cast<std::size_t>(c) * spec.num_classes + spec.num_classes, 1, 1});
  } else {
    const int fh = h, fw = w, fc = c;
    for (int r : spec.aspp_rates) {
      h = fh;
      w = fw;
      c = fc;
      conv("aspp/rate" + std::to_string(r), spec.num_classes, 3, 1, r, true);
    }
    if (spec.aspp_rates.size() > 1) simple("aspp/sum", "add");
    const int s = spec.label_scale() * spec.output_stride();
    rows.push_back({"upsample", "upsample", c, c, fh * s, fw * s, 1, 1, 1, false, 0, fh, fw});
  }
  return rows;
}

std::string summary_text(const std::vector<LayerRow>& rows) {
  std::ostringstream os;
  os << "name\top\tout_shape\tkernel\tstride\tdilation\tparams\n";
  for (const LayerRow& r : rows)
    os << r.name << '\t' << r.op << '\t' << r.out_channels << 'x' << r.out_h << 'x' << r.out_w << '\t' << r.kernel << '\t'
       << r.stride << '\t' << r.dilation << '\t' << r.params << '\n';
  return os.str();
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  Rng rng = Rng::stream(seed, "init/" + spec_.variant);
  for (const LayerRow& row : spec_summary(spec_, 64, 64)) {
    if (row.op == "conv") {
      const int fan_in = row.in_channels * row.kernel * row.kernel;
      if (row.bias) {
        Tensor w({row.out_channels, row.in_channels, row.kernel, row.kernel});
        for (float& v : w.values()) v = 0.01f * rng.normal();
        store_.add(row.name + "/weight", std::move(w));
        store_.add(row.name + "/bias", Tensor({row.out_channels}));
      } else {
        store_.add(row.name + "/weight", he_normal({row.out_channels, row.in_channels, row.kernel, row.kernel}, fan_in, rng));
      }
    } else if (row.op == "bn") {
      // the last norm of each residual branch starts at zero so every unit
      // begins as an identity map
      const bool last = row.name.ends_with("/conv3/bn");
      store_.add(row.name + "/scale", Tensor({row.out_channels}, last ? 0.0f : 1.0f));
      store_.add(row.name + "/shift", Tensor({row.out_channels}));
      store_.add_batch_norm(row.name, row.out_channels);
    } else if (row.op == "fc") {
      Tensor w({row.out_channels, row.in_channels});
      for (float& v : w.values()) v = 0.01f * rng.normal();
      store_.add("logits/weight", std::move(w));
      store_.add("logits/bias", Tensor({row.out_channels}));
    }
  }
}

bool Network::is_head(std::string_view name) const { return name.starts_with("logits/") || name.starts_with("aspp/"); }

std::vector<Parameter*> Network::head_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : store_.parameters())
    if (is_head(p->name)) out.push_back(p);
  return out;
}

std::vector<Parameter*> Network::backbone_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : store_.parameters())
    if (!is_head(p->name)) out.push_back(p);
  return out;
}

Var Network::conv_bn(Var x, const std::string& name, int stride, int dilation, Mode mode, bool activate) {
  Tape& t = x.tape();
  Var h = conv2d(x, t.parameter(store_.get(name + "/weight")), std::nullopt, {stride, dilation, Padding::same});
  h = batch_norm(h, t.parameter(store_.get(name + "/bn/scale")), t.parameter(store_.get(name + "/bn/shift")),
                 store_.batch_norm_state(name + "/bn"), mode);
  return activate ? relu(h) : h;
}

Var Network::bottleneck(Var x, const std::string& name, int in_c, int width, int stride, int dilation, Mode mode) {
  Var h = conv_bn(x, name + "/conv1", stride, 1, mode, true);
  h = conv_bn(h, name + "/conv2", 1, dilation, mode, true);
  h = conv_bn(h, name + "/conv3", 1, 1, mode, false);
  Var shortcut = (in_c != 4 * width || stride != 1) ? conv_bn(x, name + "/shortcut", stride, 1, mode, false) : x;
  return relu(add(h, shortcut));
}

Var Network::features(Var input, Mode mode) {
  const Shape& s = input.shape();
  require(s.size() == 4 && s[1] == spec_.input_channels, Errc::shape_mismatch,
          spec_.variant + ": expected (N," + std::to_string(spec_.input_channels) + ",H,W) input, got " + shape_string(s));
  Var h = input;
  int c = spec_.input_channels;
  if (spec_.has_root) {
    h = conv_bn(h, "conv1", 2, 1, mode, true);
    h = max_pool(h, 3, 2);
    c = spec_.root_width;
  }
  for (const StageSpec& st : spec_.stages)
    for (int b = 1; b <= st.blocks; ++b) {
      h = bottleneck(h, st.name + "_" + std::to_string(b), c, st.width, b == 1 ? st.stride : 1, st.dilation, mode);
      c = 4 * st.width;
    }
  return h;
}

Var Network::forward(Var input, Mode mode) {
  Var f = features(input, mode);
  Tape& t = input.tape();
  if (spec_.head == Head::classifier)
    return linear(global_avg_pool(f), t.parameter(store_.get("logits/weight")), t.parameter(store_.get("logits/bias")));
  Var sum_v;
  for (int r : spec_.aspp_rates) {
    const std::string n = "aspp/rate" + std::to_string(r);
    Var b = conv2d(f, t.parameter(store_.get(n + "/weight")), t.parameter(store_.get(n + "/bias")), {1, r, Padding::same});
    sum_v = sum_v.valid() ? add(sum_v, b) : b;
  }
  const int s = spec_.label_scale();
  return resize_bilinear(sum_v, input.shape()[2] * s, input.shape()[3] * s);
}

std::size_t transfer_backbone(const Network& from, Network& to) {
  std::size_t copied = 0;
  const auto src = from.store().tensors();
  for (auto& [name, dst] : to.store().tensors()) {
    if (to.is_head(name)) continue;
    const Tensor* match = nullptr;
    for (const auto& [n, t] : src)
      if (n == name) match = t;
    require(match != nullptr, Errc::shape_mismatch, "incompatible pretrained weights: missing " + name);
    require(match->shape() == dst->shape(), Errc::shape_mismatch,
            "incompatible pretrained weights: " + name + " is " + shape_string(match->shape()) + ", expected " +
                shape_string(dst->shape()));
    *dst = *match;
    ++copied;
  }
  return copied;
}

}  // namespace dcic
