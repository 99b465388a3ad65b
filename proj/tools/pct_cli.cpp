// pct: command-line front end for the pseudo-CT denoising pipeline.

#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "pct/errors.hpp"
#include "pct/pipeline.hpp"
#include "pct/rng.hpp"

namespace {

using namespace pct;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) out.push_back(tok);
    }
  }
  return out;
}

// Flags shared by every subcommand; applied on top of the config file.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::optional<std::size_t> update_period;
  std::optional<std::size_t> steps;
  std::string loss;
  std::vector<std::string> strategies;
  std::vector<std::string> schemes;
  std::string granularity;
  bool force = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run configuration; flags override its values");
  app->add_option("--seed", o.seed, "run seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--dataset", o.dataset, "dataset directory (manifest.json + raw slices)");
}

void add_training(CLI::App* app, Overrides& o) {
  app->add_option("--update-period", o.update_period, "sync period C of the fine-tuning loop");
  app->add_option("--steps", o.steps, "fine-tuning steps");
  app->add_option("--loss", o.loss, "fine-tuning loss: L1 or L2");
  app->add_option("--noise-strategy", o.strategies, "ensemble, hist, gaussian, model+hist (repeatable or comma list)");
  app->add_option("--scheme", o.schemes, "N2C, N2N, N2V (repeatable or comma list)");
  app->add_option("--granularity", o.granularity, "fine-tune on all test images (pooled) or per subject");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  c.synth.seed = c.seed;
  if (!o.out.empty()) c.output = o.out;
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (o.update_period) {
    if (*o.update_period == 0) throw ConfigError("--update-period must be >= 1");
    c.finetune.update_period = *o.update_period;
  }
  if (o.steps) c.finetune.loop.steps = *o.steps;
  if (!o.loss.empty()) c.finetune.loop.loss = parse_loss_kind(o.loss);
  if (!o.strategies.empty()) {
    c.strategies.clear();
    for (const auto& s : split_list(o.strategies)) c.strategies.push_back(parse_noise_strategy(s));
  }
  if (!o.schemes.empty()) {
    c.schemes.clear();
    for (const auto& s : split_list(o.schemes)) c.schemes.push_back(parse_scheme(s));
  }
  if (!o.granularity.empty()) {
    nlohmann::json j = to_json(c);
    j["finetune"]["granularity"] = o.granularity;
    c = run_config_from_json(j, c);
  }
  if (o.force) c.force = true;
  return c;
}

Dataset require_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("--dataset is required (or set \"dataset\" in the config)");
  return load_dataset(c.dataset);
}

int cmd_synth(const RunConfig& c) {
  SynthSpec spec = c.synth;
  spec.seed = c.seed;
  const Dataset ds = synth_dataset(spec);
  write_dataset(ds, c.output, c.force);
  save_run_config(c, c.output / "synth_config.json");
  std::cerr << "[pct] wrote " << ds.slice_count() * 2 << " raw slices for " << ds.subjects.size()
            << " subjects to " << c.output << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& c) {
  const Dataset ds = require_dataset(c);
  const DatasetSplit split = stage_split(c, ds);
  save_run_config(c, c.output / "run_config.json");
  for (SchemeKind s : c.schemes) {
    stage_pretrain(c, ds, split, s);
    std::cerr << "[pct] " << to_string(s) << " weights: " << (c.output / to_string(s) / "pretrained.pctw") << "\n";
  }
  return 0;
}

int cmd_train_noise(const RunConfig& c) {
  const Dataset ds = require_dataset(c);
  const DatasetSplit split = stage_split(c, ds);
  save_run_config(c, c.output / "run_config.json");
  stage_train_noise(c, ds, split);
  std::cerr << "[pct] ensemble manifest: " << (c.output / "noise" / "ensemble.json") << "\n";
  return 0;
}

int cmd_finetune(const RunConfig& c, const std::string& weights, const std::string& ensemble, bool no_sync) {
  if (weights.empty()) throw ConfigError("--weights (pre-trained denoiser) is required");
  const Dataset ds = require_dataset(c);
  const DatasetSplit split = stage_split(c, ds);
  const TestSet test = make_test_set(ds, split);
  save_run_config(c, c.output / "run_config.json");
  const DenoiserNet pre = load_denoiser(weights);
  std::vector<NoiseMapSet> maps(test.ldct.size());
  if (!ensemble.empty()) {
    const NoiseEnsemble ens = load_ensemble(ensemble);
    for (std::size_t i = 0; i < test.ldct.size(); ++i) maps[i] = predict_noise_set(ens, test.ldct[i]);
  }
  const NoiseHistogram hist(train_noise_maps(ds, split));
  std::map<std::string, std::vector<Tensor>> outputs;
  outputs[kInputRow] = test.ldct;
  outputs["pretrained"] = denoise_all(pre, test.ldct);
  for (NoiseStrategy s : c.strategies) {
    const bool needs_models = s == NoiseStrategy::Ensemble || s == NoiseStrategy::ModelPlusHist;
    if (needs_models && ensemble.empty()) {
      throw ConfigError("noise strategy '" + to_string(s) + "' needs --ensemble <ensemble.json>");
    }
    const auto seed = derive_seed(c.seed, 0x46494e45ull);
    auto run = stage_finetune(c, pre, test, s, !no_sync, maps, hist, seed, c.output / "finetune");
    const std::string label = "finetuned " + to_string(s) + (no_sync ? " w/o sync" : "");
    if (run.results.size() == 1) {
      save_weights(run.results.front().final_model(), c.output / ("finetuned_" + to_string(s) + ".pctw"));
    }
    outputs[label] = std::move(run.outputs);
  }
  const EvalReport rep = evaluate(outputs, test.ndct);
  write_report(rep, c.output);
  std::cout << report_table(rep);
  return 0;
}

int cmd_eval(const RunConfig& c, const std::vector<std::string>& models) {
  const Dataset ds = require_dataset(c);
  const DatasetSplit split = stage_split(c, ds);
  const TestSet test = make_test_set(ds, split);
  std::map<std::string, std::vector<Tensor>> outputs;
  outputs[kInputRow] = test.ldct;
  for (const auto& spec : models) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? spec : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    outputs[name] = denoise_all(load_denoiser(path), test.ldct);
  }
  const EvalReport rep = evaluate(outputs, test.ndct);
  write_report(rep, c.output);
  std::cout << report_table(rep);
  return 0;
}

int cmd_pipeline(const RunConfig& c) {
  const PipelineResult r = run_pipeline(c);
  std::cout << report_table(r.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised CT denoising with pseudo-CT image pairs"};
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic NDCT/LDCT dataset");
  add_common(synth, o);
  std::size_t subjects = 0, slices = 0, size = 0;
  double dose = 0.0;
  auto* subj_opt = synth->add_option("--subjects", subjects, "number of subjects");
  auto* slice_opt = synth->add_option("--slices", slices, "slices per subject");
  auto* size_opt = synth->add_option("--size", size, "slice side length in pixels");
  auto* dose_opt = synth->add_option("--dose", dose, "dose factor in (0, 1]");
  synth->add_flag("--force", o.force, "overwrite a non-empty output directory");

  auto* pre = app.add_subcommand("pretrain", "pre-train denoisers with N2C/N2N/N2V");
  add_common(pre, o);
  add_training(pre, o);

  auto* tn = app.add_subcommand("train-noise", "train one noise model per training subject");
  add_common(tn, o);

  auto* ft = app.add_subcommand("finetune", "fine-tune a pre-trained denoiser on the test LDCT images");
  add_common(ft, o);
  add_training(ft, o);
  std::string weights, ensemble;
  bool no_sync = false;
  ft->add_option("--weights", weights, "pre-trained denoiser weight file");
  ft->add_option("--ensemble", ensemble, "noise ensemble manifest (ensemble.json)");
  ft->add_flag("--no-sync", no_sync, "keep theta frozen (ablation)");

  auto* ev = app.add_subcommand("eval", "evaluate denoisers on the test split");
  add_common(ev, o);
  std::vector<std::string> models;
  ev->add_option("--model", models, "name=weights.pctw (repeatable)")->required();

  auto* pipe = app.add_subcommand("pipeline", "run every stage and write the comparison report");
  add_common(pipe, o);
  add_training(pipe, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RunConfig c = resolve(o);
    if (synth->parsed()) {
      if (subj_opt->count()) c.synth.subjects = subjects;
      if (slice_opt->count()) c.synth.slices_per_subject = slices;
      if (size_opt->count()) c.synth.size = size;
      if (dose_opt->count()) c.synth.dose_factor = dose;
      return cmd_synth(c);
    }
    if (pre->parsed()) return cmd_pretrain(c);
    if (tn->parsed()) return cmd_train_noise(c);
    if (ft->parsed()) return cmd_finetune(c, weights, ensemble, no_sync);
    if (ev->parsed()) return cmd_eval(c, models);
    if (pipe->parsed()) return cmd_pipeline(c);
  } catch (const ConfigError& e) {
    std::cerr << "pct: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "pct: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "pct: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "pct: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "pct: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
