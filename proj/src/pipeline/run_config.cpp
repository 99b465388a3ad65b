#include <fstream>
#include <set>

#include "pct/errors.hpp"
#include "pct/pipeline.hpp"

namespace pct {

using nlohmann::json;

RunConfig default_run_config() {
  RunConfig c;
  c.denoiser.depth = 5;
  c.denoiser.channels = 16;
  c.noise_net.levels = 2;
  c.noise_net.channels = 16;

  c.pretrain.steps = 300;
  c.pretrain.batch = 8;
  c.pretrain.epoch_steps = 20;
  c.pretrain.adam.lr = 1e-3;
  c.pretrain.loss = LossKind::L1;

  c.noise_training = c.pretrain;
  // noise nets regress a conditional mean, so their maps are under-dispersed;
  // the longer run narrows the gap (std ratio ~0.62 at 200 steps of 2x8)
  c.noise_training.steps = 600;

  c.finetune.loop.steps = 100;
  c.finetune.loop.batch = 8;
  c.finetune.loop.loss = LossKind::L2;
  c.finetune.update_period = 10;
  c.finetune.lr = 3e-5;
  return c;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError("unknown config key '" + where + "." + k + "'");
  }
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json augment_json(const AugmentSpec& a) {
  return {{"enabled", a.enabled},
          {"min_scale", a.min_scale},
          {"max_scale", a.max_scale},
          {"horizontal_flip", a.horizontal_flip},
          {"vertical_flip", a.vertical_flip}};
}

AugmentSpec augment_from(const json& j, AugmentSpec a, const std::string& where) {
  check_keys(j, {"enabled", "min_scale", "max_scale", "horizontal_flip", "vertical_flip"}, where);
  get(j, "enabled", a.enabled);
  get(j, "min_scale", a.min_scale);
  get(j, "max_scale", a.max_scale);
  get(j, "horizontal_flip", a.horizontal_flip);
  get(j, "vertical_flip", a.vertical_flip);
  if (!(a.min_scale > 0.0 && a.min_scale <= a.max_scale)) throw ConfigError(where + ": need 0 < min_scale <= max_scale");
  return a;
}

json train_json(const TrainConfig& t) {
  return {{"steps", t.steps},
          {"batch", t.batch},
          {"patch", t.patch},
          {"epoch_steps", t.epoch_steps},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"plateau_patience", t.plateau_patience},
          {"min_lr", t.min_lr},
          {"loss", to_string(t.loss)},
          {"augment", augment_json(t.augment)}};
}

TrainConfig train_from(const json& j, TrainConfig t, const std::string& where) {
  check_keys(j,
             {"steps", "batch", "patch", "epoch_steps", "lr", "beta1", "beta2", "eps", "plateau_patience", "min_lr",
              "loss", "augment"},
             where);
  get(j, "steps", t.steps);
  get(j, "batch", t.batch);
  get(j, "patch", t.patch);
  get(j, "epoch_steps", t.epoch_steps);
  get(j, "lr", t.adam.lr);
  get(j, "beta1", t.adam.beta1);
  get(j, "beta2", t.adam.beta2);
  get(j, "eps", t.adam.eps);
  get(j, "plateau_patience", t.plateau_patience);
  get(j, "min_lr", t.min_lr);
  if (j.contains("loss")) t.loss = parse_loss_kind(j.at("loss").get<std::string>());
  if (j.contains("augment")) t.augment = augment_from(j.at("augment"), t.augment, where + ".augment");
  if (t.batch == 0 || t.patch == 0) throw ConfigError(where + ": batch and patch must be positive");
  if (t.epoch_steps == 0) throw ConfigError(where + ": epoch_steps must be positive");
  if (t.plateau_patience < 1) throw ConfigError(where + ": plateau_patience must be >= 1");
  return t;
}

std::string granularity_name(FinetuneGranularity g) {
  return g == FinetuneGranularity::Pooled ? "pooled" : "subject";
}

FinetuneGranularity parse_granularity(const std::string& s) {
  if (s == "pooled") return FinetuneGranularity::Pooled;
  if (s == "subject") return FinetuneGranularity::PerSubject;
  throw ConfigError("unknown fine-tuning granularity '" + s + "' (expected pooled or subject)");
}

}  // namespace

json to_json(const RunConfig& c) {
  json schemes = json::array();
  for (auto s : c.schemes) schemes.push_back(to_string(s));
  json strategies = json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  const auto& f = c.finetune;
  return {{"seed", c.seed},
          {"output", c.output.string()},
          {"dataset", c.dataset.string()},
          {"synth",
           {{"subjects", c.synth.subjects},
            {"slices_per_subject", c.synth.slices_per_subject},
            {"size", c.synth.size},
            {"dose_factor", c.synth.dose_factor},
            {"sigma0", c.synth.noise.sigma0},
            {"streak_amplitude", c.synth.noise.streak_amplitude}}},
          {"split", {{"train", c.n_train}, {"test", c.n_test}}},
          {"denoiser", {{"depth", c.denoiser.depth}, {"channels", c.denoiser.channels}, {"kernel", c.denoiser.kernel}}},
          {"noise_net", {{"levels", c.noise_net.levels}, {"channels", c.noise_net.channels}}},
          {"pretrain", train_json(c.pretrain)},
          {"noise_training", train_json(c.noise_training)},
          {"schemes", schemes},
          {"n2v", {{"fraction", c.n2v_fraction}, {"window", c.n2v_window}}},
          {"noise_strategies", strategies},
          {"no_sync_ablation", c.no_sync_ablation},
          {"finetune",
           {{"steps", f.loop.steps},
            {"batch", f.loop.batch},
            {"patch", f.loop.patch},
            {"loss", to_string(f.loop.loss)},
            {"update_period", f.update_period},
            {"lr", f.lr},
            {"early_stop_patience", f.loop.early_stop_patience},
            {"loss_smoothing", f.loop.loss_smoothing},
            {"augment", augment_json(f.loop.augment)},
            {"granularity", granularity_name(f.granularity)}}},
          {"model_plus_hist", {{"model", c.model_plus_hist.model}, {"hist", c.model_plus_hist.hist}}},
          {"gaussian_std", c.gaussian_std},
          {"save_images", c.save_images},
          {"force", c.force}};
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    check_keys(j,
               {"seed", "output", "dataset", "synth", "split", "denoiser", "noise_net", "pretrain", "noise_training",
                "schemes", "n2v", "noise_strategies", "no_sync_ablation", "finetune", "model_plus_hist",
                "gaussian_std", "save_images", "force"},
               "config");
    get(j, "seed", c.seed);
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, {"subjects", "slices_per_subject", "size", "dose_factor", "sigma0", "streak_amplitude"}, "synth");
      get(s, "subjects", c.synth.subjects);
      get(s, "slices_per_subject", c.synth.slices_per_subject);
      get(s, "size", c.synth.size);
      get(s, "dose_factor", c.synth.dose_factor);
      get(s, "sigma0", c.synth.noise.sigma0);
      get(s, "streak_amplitude", c.synth.noise.streak_amplitude);
    }
    if (j.contains("split")) {
      check_keys(j.at("split"), {"train", "test"}, "split");
      get(j.at("split"), "train", c.n_train);
      get(j.at("split"), "test", c.n_test);
    }
    if (j.contains("denoiser")) {
      check_keys(j.at("denoiser"), {"depth", "channels", "kernel"}, "denoiser");
      get(j.at("denoiser"), "depth", c.denoiser.depth);
      get(j.at("denoiser"), "channels", c.denoiser.channels);
      get(j.at("denoiser"), "kernel", c.denoiser.kernel);
    }
    if (j.contains("noise_net")) {
      check_keys(j.at("noise_net"), {"levels", "channels"}, "noise_net");
      get(j.at("noise_net"), "levels", c.noise_net.levels);
      get(j.at("noise_net"), "channels", c.noise_net.channels);
    }
    if (j.contains("pretrain")) c.pretrain = train_from(j.at("pretrain"), c.pretrain, "pretrain");
    if (j.contains("noise_training")) {
      c.noise_training = train_from(j.at("noise_training"), c.noise_training, "noise_training");
    }
    if (j.contains("schemes")) {
      c.schemes.clear();
      for (const auto& s : j.at("schemes")) c.schemes.push_back(parse_scheme(s.get<std::string>()));
    }
    if (j.contains("n2v")) {
      check_keys(j.at("n2v"), {"fraction", "window"}, "n2v");
      get(j.at("n2v"), "fraction", c.n2v_fraction);
      get(j.at("n2v"), "window", c.n2v_window);
    }
    if (j.contains("noise_strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("noise_strategies")) c.strategies.push_back(parse_noise_strategy(s.get<std::string>()));
    }
    get(j, "no_sync_ablation", c.no_sync_ablation);
    if (j.contains("finetune")) {
      const auto& f = j.at("finetune");
      check_keys(f,
                 {"steps", "batch", "patch", "loss", "update_period", "lr", "early_stop_patience", "loss_smoothing",
                  "augment", "granularity"},
                 "finetune");
      get(f, "steps", c.finetune.loop.steps);
      get(f, "batch", c.finetune.loop.batch);
      get(f, "patch", c.finetune.loop.patch);
      if (f.contains("loss")) c.finetune.loop.loss = parse_loss_kind(f.at("loss").get<std::string>());
      get(f, "update_period", c.finetune.update_period);
      get(f, "lr", c.finetune.lr);
      get(f, "early_stop_patience", c.finetune.loop.early_stop_patience);
      get(f, "loss_smoothing", c.finetune.loop.loss_smoothing);
      if (f.contains("augment"))
        c.finetune.loop.augment = augment_from(f.at("augment"), c.finetune.loop.augment, "finetune.augment");
      if (f.contains("granularity")) c.finetune.granularity = parse_granularity(f.at("granularity").get<std::string>());
    }
    if (j.contains("model_plus_hist")) {
      check_keys(j.at("model_plus_hist"), {"model", "hist"}, "model_plus_hist");
      get(j.at("model_plus_hist"), "model", c.model_plus_hist.model);
      get(j.at("model_plus_hist"), "hist", c.model_plus_hist.hist);
    }
    get(j, "gaussian_std", c.gaussian_std);
    get(j, "save_images", c.save_images);
    get(j, "force", c.force);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  if (c.finetune.update_period == 0) throw ConfigError("finetune.update_period must be >= 1");
  if (c.finetune.loop.batch == 0) throw ConfigError("finetune.batch must be >= 1");
  c.synth.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << to_json(c).dump(2) << "\n";
}

}  // namespace pct
