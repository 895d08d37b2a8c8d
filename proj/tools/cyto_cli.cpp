// Command-line front end. Talks to the library only through cyto.h.
#include <CLI11.hpp>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cyto/cyto.h"

namespace {

struct KeyInfo {
  std::string name, def, help, type;
};

std::map<std::string, KeyInfo> key_table() {
  std::map<std::string, KeyInfo> t;
  for (size_t i = 0; i < cyto_config_key_count(); ++i) {
    KeyInfo k{cyto_config_key_name(i), cyto_config_key_default(i), cyto_config_key_help(i), cyto_config_key_type(i)};
    t[k.name] = k;
  }
  return t;
}

const std::vector<std::string> kSplit = {"split-train", "split-val", "split-test"};
const std::vector<std::string> kData = {"data-root", "manifest", "out", "seed"};

std::vector<std::string> join(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct StageSpec {
  const char* name;
  const char* about;
  std::vector<std::string> keys;
  std::map<std::string, std::string> aliases;  // extra flag name -> key
};

std::vector<StageSpec> stage_specs() {
  return {
      {"synth", "generate the synthetic 5-class cell set with masks and a manifest",
       join({{"out", "seed", "per-class", "image-side"}, kSplit}),
       {}},
      {"train-classifier", "train the multi-resolution classifier on the train split",
       join({kData, {"epochs", "batch-size", "lr", "checkpoint"}, kSplit}),
       {}},
      {"train-mtl", "train the multi-task UNet (segmentation + classification)",
       join({kData,
             {"mtl-epochs", "mtl-batch-size", "mtl-lr", "lambda-seg", "lambda-cls", "input-side", "binarize-threshold",
              "checkpoint"},
             kSplit}),
       {}},
      {"segment", "predict cell masks (patch grid for large images)",
       join({kData, {"subset", "checkpoint", "binarize-threshold", "patch-side", "grid-cols", "grid-rows"}, kSplit}),
       {{"threshold", "binarize-threshold"}}},
      {"bbox", "bounding boxes from binary masks, optionally rendered",
       join({kData, {"subset", "masks", "pad", "components", "render", "thickness"}, kSplit}),
       {}},
      {"classify", "classify images (optionally cropped to boxes)",
       join({kData, {"subset", "checkpoint", "boxes"}, kSplit}),
       {}},
      {"extract-features", "write 64-dim classifier features as JSON lines",
       join({kData, {"subset", "checkpoint", "boxes"}, kSplit}),
       {}},
      {"fit-risk", "fit per-class Gaussian statistics to labelled features",
       {"out", "subset", "features", "stats", "ridge", "priors"},
       {}},
      {"risk", "posterior, cosine similarity and high-risk flags per feature vector",
       {"out", "subset", "features", "stats", "cosine-threshold"},
       {{"threshold", "cosine-threshold"}}},
      {"eval", "classification report, mask IoU/Dice and kNN feature check",
       join({kData, {"subset", "predictions", "masks", "features", "train-features", "k"}, kSplit}),
       {}},
  };
}

struct Bound {
  std::string key;
  CLI::Option* opt = nullptr;
  std::string value;
  bool flag_value = false;
  bool is_flag = false;
};

int fail(cyto_status st) {
  std::fprintf(stderr, "error: %s: %s\n", cyto_status_string(st), cyto_last_error());
  return cyto_exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cervical cytology pipeline: synthesis, training, segmentation, boxes, classification and risk."};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(cyto_version()));
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value file; command-line flags take precedence");

  const auto keys = key_table();
  std::vector<std::unique_ptr<Bound>> bound;
  std::map<CLI::App*, std::vector<Bound*>> per_stage;

  for (const StageSpec& s : stage_specs()) {
    CLI::App* sub = app.add_subcommand(s.name, s.about);
    for (const std::string& key : s.keys) {
      const KeyInfo& k = keys.at(key);
      auto b = std::make_unique<Bound>();
      b->key = key;
      std::string names = "--" + key;
      for (const auto& [alias, target] : s.aliases) {
        if (target == key) names += ",--" + alias;
      }
      if (k.type == "flag") {
        b->is_flag = true;
        b->opt = sub->add_flag(names, b->flag_value, k.help);
      } else {
        std::string help = k.help;
        help += k.def.empty() ? " (default: derived)" : " (default: " + k.def + ")";
        b->opt = sub->add_option(names, b->value, help);
        if (k.type == "int" || k.type == "real") b->opt->type_name(k.type == "int" ? "INT" : "NUM");
      }
      per_stage[sub].push_back(b.get());
      bound.push_back(std::move(b));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  cyto_config* cfg = nullptr;
  if (cyto_status st = cyto_config_create(&cfg); st != CYTO_OK) return fail(st);
  std::unique_ptr<cyto_config, void (*)(cyto_config*)> guard(cfg, cyto_config_destroy);

  if (!config_path.empty()) {
    if (cyto_status st = cyto_config_load_file(cfg, config_path.c_str()); st != CYTO_OK) return fail(st);
  }
  for (Bound* b : per_stage[chosen]) {
    if (b->opt->count() == 0) continue;
    const std::string v = b->is_flag ? (b->flag_value ? "true" : "false") : b->value;
    if (cyto_status st = cyto_config_set(cfg, b->key.c_str(), v.c_str()); st != CYTO_OK) return fail(st);
  }

  char report[4096];
  if (cyto_status st = cyto_run_stage(chosen->get_name().c_str(), cfg, report, sizeof report); st != CYTO_OK) {
    return fail(st);
  }
  std::printf("%s: report written to %s\n", chosen->get_name().c_str(), report);
  return 0;
}
