/* C interface to the dcic library. Every function returns a dcic_status;
 * on failure dcic_last_error() describes the problem (per thread). Handles
 * are opaque and released with the matching *_destroy function. Text
 * outputs use caller buffers: up to cap-1 bytes plus a NUL are written and
 * *len (if not NULL) receives the full length. */
#ifndef DCIC_H
#define DCIC_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DCIC_API __declspec(dllexport)
#else
#define DCIC_API __attribute__((visibility("default")))
#endif

typedef enum dcic_status {
  DCIC_OK = 0,
  DCIC_ERR_INVALID_ARGUMENT = 1,
  DCIC_ERR_SHAPE_MISMATCH = 2,
  DCIC_ERR_IO = 3,
  DCIC_ERR_BAD_MAGIC = 4,
  DCIC_ERR_UNSUPPORTED_VERSION = 5,
  DCIC_ERR_CORRUPT = 6,
  DCIC_ERR_TRUNCATED = 7,
  DCIC_ERR_KIND_MISMATCH = 8,
  DCIC_ERR_NUMERIC = 9,
  DCIC_ERR_TAPE_CONSUMED = 10,
  DCIC_ERR_USAGE = 11,
  DCIC_ERR_INTERNAL = 12
} dcic_status;

typedef struct dcic_config dcic_config;
typedef struct dcic_compressor dcic_compressor;
typedef struct dcic_network dcic_network;

/* Receives each new trace row, tab separated, with the column header row first. */
typedef void (*dcic_progress_fn)(const char* row, void* user);

typedef struct dcic_quality {
  double bpp;
  double psnr;
  double ssim;
  double ms_ssim; /* 0 when the probe images are too small */
  double hard_entropy;
} dcic_quality;

typedef struct dcic_accuracy {
  double top1;
  double top5;
} dcic_accuracy;

typedef struct dcic_segmentation {
  double miou;
  double pixel_accuracy;
} dcic_segmentation;

typedef struct dcic_joint_result {
  double top1;
  double top5;
  double max_additivity_error;
  dcic_quality before;
  dcic_quality after;
} dcic_joint_result;

typedef struct dcic_image_metrics {
  double psnr;
  double ssim;
  double ms_ssim; /* negative when either side is below 176 pixels */
} dcic_image_metrics;

typedef struct dcic_timing {
  double flops;
  double mean_s;
  double median_s;
  double stddev_s;
  int samples;
} dcic_timing;

DCIC_API const char* dcic_last_error(void);
DCIC_API const char* dcic_status_name(dcic_status status);

/* Configuration: defaults for every key, then files and key=value overrides. */
DCIC_API dcic_status dcic_config_create(dcic_config** out);
DCIC_API void dcic_config_destroy(dcic_config* config);
DCIC_API dcic_status dcic_config_load(dcic_config* config, const char* path);
DCIC_API dcic_status dcic_config_set(dcic_config* config, const char* assignment);
DCIC_API dcic_status dcic_config_get(const dcic_config* config, const char* key, char* buf, size_t cap, size_t* len);
DCIC_API dcic_status dcic_config_text(const dcic_config* config, char* buf, size_t cap, size_t* len);

/* Compression models. */
DCIC_API dcic_status dcic_train_compressor(const dcic_config* config, const char* trace_path, dcic_progress_fn progress,
                                           void* user, dcic_compressor** out, dcic_quality* quality);
/* Untrained model built from the compressor.* settings. */
DCIC_API dcic_status dcic_compressor_create(const dcic_config* config, dcic_compressor** out);
DCIC_API dcic_status dcic_compressor_load(const char* path, dcic_compressor** out);
DCIC_API dcic_status dcic_compressor_save(const dcic_compressor* model, const char* path);
DCIC_API void dcic_compressor_destroy(dcic_compressor* model);
DCIC_API dcic_status dcic_compressor_evaluate(dcic_compressor* model, const dcic_config* config, dcic_quality* out);
/* PPM image to a coded file; bpp may be NULL. */
DCIC_API dcic_status dcic_encode_file(dcic_compressor* model, const char* image_path, const char* coded_path, double* bpp);
DCIC_API dcic_status dcic_decode_file(dcic_compressor* model, const char* coded_path, const char* image_path);

/* Inference networks. init may be NULL; otherwise training continues from it. */
DCIC_API dcic_status dcic_train_classifier(const dcic_config* config, dcic_compressor* codec, const dcic_network* init,
                                           const char* trace_path, dcic_progress_fn progress, void* user,
                                           dcic_network** out, dcic_accuracy* accuracy);
DCIC_API dcic_status dcic_train_segmenter(const dcic_config* config, dcic_compressor* codec, const dcic_network* pretrained,
                                          const char* trace_path, dcic_progress_fn progress, void* user,
                                          dcic_network** out, dcic_segmentation* result);
/* Updates codec and classifier in place. */
DCIC_API dcic_status dcic_train_joint(const dcic_config* config, dcic_compressor* codec, dcic_network* classifier,
                                      const char* trace_path, dcic_progress_fn progress, void* user, dcic_joint_result* out);
/* Loads a classifier or segmenter checkpoint. */
DCIC_API dcic_status dcic_network_load(const char* path, dcic_network** out);
DCIC_API dcic_status dcic_network_save(const dcic_network* net, const char* path);
DCIC_API void dcic_network_destroy(dcic_network* net);
/* 1 for a segmenter, 0 for a classifier. */
DCIC_API dcic_status dcic_network_is_segmenter(const dcic_network* net, int* out);
DCIC_API dcic_status dcic_network_variant(const dcic_network* net, char* buf, size_t cap, size_t* len);
/* Evaluation on the test split; the input source comes from the config. */
DCIC_API dcic_status dcic_eval_classifier(const dcic_config* config, dcic_compressor* codec, dcic_network* net,
                                          dcic_accuracy* out);
DCIC_API dcic_status dcic_eval_segmenter(const dcic_config* config, dcic_compressor* codec, dcic_network* net,
                                         dcic_segmentation* out);

/* Analysis. subject is a network variant, or "encoder" / "decoder" (an image of
 * height x width x 3 through the compressor.* settings). Writes the per-layer
 * table to buf; total may be NULL. */
DCIC_API dcic_status dcic_flops(const dcic_config* config, const char* subject, int height, int width, int channels,
                                char* buf, size_t cap, size_t* len, double* total);
/* Direct inference versus decoder + RGB network for an image of height x width. */
DCIC_API dcic_status dcic_cost_comparison(const dcic_config* config, const char* direct_variant, const char* rgb_variant,
                                          int height, int width, char* buf, size_t cap, size_t* len, double* ratio);
DCIC_API dcic_status dcic_compare_images(const char* path_a, const char* path_b, dcic_image_metrics* out);
/* Per-image wall clock of both pipelines; repetitions >= 3, the first discarded.
 * codec may be NULL (an untrained model from the config is timed). */
DCIC_API dcic_status dcic_bench(const dcic_config* config, dcic_compressor* codec, const char* direct_variant,
                                const char* rgb_variant, int height, int width, int repetitions, dcic_timing* direct,
                                dcic_timing* pipeline, char* buf, size_t cap, size_t* len);

/* Writes the configured train and test splits as PPM/PGM folders with manifests. */
DCIC_API dcic_status dcic_generate_data(const dcic_config* config, const char* directory);

#ifdef __cplusplus
}
#endif

#endif
