// capi.cc

#include "tsesv.h"

#include <string>
#include <vector>

#include "tsesv/pipeline.hpp"

struct tsesv_ctx {
  std::string last_error;
};

struct tsesv_extractor {
  tsesv::ExtractorModel model;
};

namespace {

std::string str_or_empty(const char* s) { return s == nullptr ? std::string() : std::string(s); }

// InputError -> 2, numeric / unexpected failures -> 1.
template <typename Fn>
int guarded(tsesv_ctx* ctx, Fn&& fn) {
  if (ctx == nullptr) return 2;
  try {
    fn();
    ctx->last_error.clear();
    return 0;
  } catch (const tsesv::InputError& e) {
    ctx->last_error = e.what();
    return 2;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return 1;
  }
}

}  // namespace

extern "C" {

tsesv_ctx* tsesv_ctx_new(void) { return new tsesv_ctx(); }

void tsesv_ctx_free(tsesv_ctx* ctx) { delete ctx; }

const char* tsesv_last_error(const tsesv_ctx* ctx) {
  return ctx == nullptr ? "" : ctx->last_error.c_str();
}

int tsesv_synth_corpus(tsesv_ctx* ctx, const char* config_path, const char* out_dir) {
  return guarded(ctx, [&] {
    tsesv::cmd_synth_corpus(tsesv::PipelineConfig::load(str_or_empty(config_path)),
                            str_or_empty(out_dir));
  });
}

int tsesv_simulate(tsesv_ctx* ctx, const char* config_path, const char* corpus_manifest,
                   const char* out_dir) {
  return guarded(ctx, [&] {
    tsesv::cmd_simulate(tsesv::PipelineConfig::load(str_or_empty(config_path)),
                        str_or_empty(corpus_manifest), str_or_empty(out_dir));
  });
}

int tsesv_train_extractor(tsesv_ctx* ctx, const char* config_path, const char* variant,
                          const char* mixture_manifest, const char* corpus_manifest,
                          const char* out_model, const char* out_log) {
  return guarded(ctx, [&] {
    tsesv::cmd_train_extractor(tsesv::PipelineConfig::load(str_or_empty(config_path)),
                               str_or_empty(variant), str_or_empty(mixture_manifest),
                               str_or_empty(corpus_manifest), str_or_empty(out_model),
                               str_or_empty(out_log));
  });
}

int tsesv_extract(tsesv_ctx* ctx, const char* model_path, const char* mixture_manifest,
                  const char* corpus_manifest, const char* out_dir) {
  return guarded(ctx, [&] {
    tsesv::cmd_extract(str_or_empty(model_path), str_or_empty(mixture_manifest),
                       str_or_empty(corpus_manifest), str_or_empty(out_dir));
  });
}

int tsesv_train_backend(tsesv_ctx* ctx, const char* config_path, const char* const* manifests,
                        int n_manifests, const char* out_model) {
  return guarded(ctx, [&] {
    std::vector<std::string> paths;
    for (int i = 0; i < n_manifests; ++i) paths.push_back(str_or_empty(manifests[i]));
    tsesv::cmd_train_backend(tsesv::PipelineConfig::load(str_or_empty(config_path)), paths,
                             str_or_empty(out_model));
  });
}

int tsesv_score(tsesv_ctx* ctx, const char* backend_model, const char* trials_path,
                const char* corpus_manifest, const char* mixture_manifest,
                const char* tse_model, const char* out_scores) {
  return guarded(ctx, [&] {
    tsesv::cmd_score(str_or_empty(backend_model), str_or_empty(trials_path),
                     str_or_empty(corpus_manifest), str_or_empty(mixture_manifest),
                     str_or_empty(tse_model), str_or_empty(out_scores));
  });
}

int tsesv_report(tsesv_ctx* ctx, const char* scores_path, const char* out_json,
                 const char* out_det_csv) {
  return guarded(ctx, [&] {
    tsesv::cmd_report(str_or_empty(scores_path), str_or_empty(out_json),
                      str_or_empty(out_det_csv));
  });
}

tsesv_extractor* tsesv_extractor_load(tsesv_ctx* ctx, const char* model_path) {
  tsesv_extractor* handle = nullptr;
  const int rc = guarded(ctx, [&] {
    handle = new tsesv_extractor{tsesv::ExtractorModel::load(str_or_empty(model_path))};
  });
  return rc == 0 ? handle : nullptr;
}

void tsesv_extractor_free(tsesv_extractor* model) { delete model; }

int tsesv_extractor_run(tsesv_ctx* ctx, const tsesv_extractor* model, const char* mixture_wav,
                        const char* aux_wav, const char* out_wav) {
  return guarded(ctx, [&] {
    if (model == nullptr) throw tsesv::InputError("extractor handle is null");
    tsesv::Waveform mixture = tsesv::load_wav(str_or_empty(mixture_wav));
    tsesv::Waveform aux = tsesv::load_wav(str_or_empty(aux_wav));
    tsesv::save_wav(str_or_empty(out_wav), tsesv::extract(model->model, mixture, aux));
  });
}

}  // extern "C"
