#include "pct/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

#include "pct/errors.hpp"
#include "pct/rng.hpp"

namespace pct {

namespace {

constexpr std::uint64_t kSplitStream = 0x53504c54ull;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953ull;
constexpr std::uint64_t kPretrainStream = 0x50524554ull;
constexpr std::uint64_t kFinetuneStream = 0x46494e45ull;

void progress(const std::string& msg) { std::cerr << "[pct] " << msg << std::endl; }

// Runs one stage, prefixing any failure with the stage name while keeping
// the error category (and thus the exit code).
template <class F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
  const auto t0 = std::chrono::steady_clock::now();
  progress(name + " ...");
  auto done = [&] {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f s", s);
    progress(name + " done (" + buf + ")");
  };
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      done();
    } else {
      auto r = f();
      done();
      return r;
    }
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + name + "': " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError("stage '" + name + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage '" + name + "': " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage '" + name + "': " + e.what());
  } catch (const StateError& e) {
    throw StateError("stage '" + name + "': " + e.what());
  }
}

std::string file_label(const std::string& label) {
  std::string out;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out += ch;
    } else if (ch == '+') {
      out += "_plus_";
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  return out;
}

std::string strategy_suffix(NoiseStrategy s) {
  switch (s) {
    case NoiseStrategy::Ensemble:
      return "+Ours";
    case NoiseStrategy::Hist:
      return "+Hist";
    case NoiseStrategy::Gaussian:
      return "+Gaussian";
    case NoiseStrategy::ModelPlusHist:
      return "+Model+Hist";
  }
  return "";
}

}  // namespace

std::string method_label(SchemeKind scheme, const std::string& suffix) { return to_string(scheme) + suffix; }

Dataset stage_dataset(const RunConfig& c) {
  if (!c.dataset.empty()) return load_dataset(c.dataset);
  SynthSpec spec = c.synth;
  spec.seed = c.seed;
  Dataset ds = synth_dataset(spec);
  write_dataset(ds, c.output / "dataset", true);
  return ds;
}

DatasetSplit stage_split(const RunConfig& c, const Dataset& ds) {
  const auto ids = ds.subject_ids();
  return make_split(ids, c.n_train, c.n_test, derive_seed(c.seed, kSplitStream));
}

NoiseEnsemble stage_train_noise(const RunConfig& c, const Dataset& ds, const DatasetSplit& split) {
  std::vector<NoiseNet> models;
  NdjsonLog log(c.output / "logs" / "noise_training.ndjson");
  NoiseTrainConfig nc{c.noise_net, c.noise_training};
  for (std::size_t i = 0; i < split.train_subjects.size(); ++i) {
    const SubjectData& sd = ds.subject(split.train_subjects[i]);
    log.write({{"subject", sd.id}, {"model", i}});
    auto trained = train_noise_model(sd.ldct, sd.ndct, nc, derive_seed(c.seed, kNoiseStream, i), &log);
    char buf[128];
    std::snprintf(buf, sizeof buf, "noise model %s: probe L1 %.5f -> %.5f", sd.id.c_str(),
                  trained.history.initial_probe_loss, trained.history.final_probe_loss);
    progress(buf);
    models.push_back(std::move(trained.net));
  }
  NoiseEnsemble ens(std::move(models), split.train_subjects);
  save_ensemble(ens, c.output / "noise");
  return ens;
}

DenoiserNet stage_pretrain(const RunConfig& c, const Dataset& ds, const DatasetSplit& split, SchemeKind scheme) {
  const PretrainData data = make_pretrain_data(ds, split.train_subjects, scheme);
  PretrainConfig pc{c.denoiser, c.pretrain};
  PretrainScheme ps{scheme, c.n2v_fraction, c.n2v_window};
  NdjsonLog log(c.output / "logs" / ("pretrain_" + to_string(scheme) + ".ndjson"));
  auto trained = pretrain(ps, data, pc, derive_seed(c.seed, kPretrainStream, static_cast<std::uint64_t>(scheme)), &log);
  save_weights(trained.net, c.output / to_string(scheme) / "pretrained.pctw");
  return std::move(trained.net);
}

TestSet make_test_set(const Dataset& ds, const DatasetSplit& split) {
  TestSet t;
  for (const auto& id : split.test_subjects) {
    const SubjectData& sd = ds.subject(id);
    for (std::size_t k = 0; k < sd.ldct.size(); ++k) {
      t.ldct.push_back(sd.ldct[k].tensor());
      t.ndct.push_back(sd.ndct[k].tensor());
      t.subject.push_back(id);
    }
  }
  return t;
}

std::vector<Tensor> train_noise_maps(const Dataset& ds, const DatasetSplit& split) {
  std::vector<Tensor> maps;
  for (const auto& id : split.train_subjects) {
    const SubjectData& sd = ds.subject(id);
    for (std::size_t k = 0; k < sd.ldct.size(); ++k) maps.push_back(noise_map(sd.ldct[k], sd.ndct[k]));
  }
  return maps;
}

std::vector<Tensor> denoise_all(const DenoiserNet& net, const std::vector<Tensor>& images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& x : images) out.push_back(denoise(net, x));
  return out;
}

FinetuneRun stage_finetune(const RunConfig& c, const DenoiserNet& pretrained, const TestSet& test,
                           NoiseStrategy strategy, bool sync,
                           const std::vector<NoiseMapSet>& test_maps, const NoiseHistogram& hist,
                           std::uint64_t seed, const std::filesystem::path& log_dir) {
  // Group image indices: one group for pooled, one per subject otherwise.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> group_names;
  if (c.finetune.granularity == FinetuneGranularity::Pooled) {
    groups.emplace_back();
    group_names.push_back("all");
    for (std::size_t i = 0; i < test.ldct.size(); ++i) groups.back().push_back(i);
  } else {
    for (std::size_t i = 0; i < test.ldct.size(); ++i) {
      std::size_t g = 0;
      while (g < group_names.size() && group_names[g] != test.subject[i]) ++g;
      if (g == group_names.size()) {
        group_names.push_back(test.subject[i]);
        groups.emplace_back();
      }
      groups[g].push_back(i);
    }
  }

  FinetuneRun run;
  run.outputs.resize(test.ldct.size());
  FinetuneConfig loop = c.finetune.loop;
  loop.sync = sync;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<Tensor> xs;
    std::vector<NoiseMapSet> maps;
    std::vector<Tensor> model_maps;
    for (std::size_t i : groups[g]) {
      xs.push_back(test.ldct[i]);
      maps.push_back(test_maps[i]);
      if (!test_maps[i].maps.empty()) model_maps.push_back(test_maps[i].maps.front());
    }
    std::unique_ptr<PseudoNoiseSource> source;
    switch (strategy) {
      case NoiseStrategy::Ensemble:
        source = make_ensemble_source(std::move(maps));
        break;
      case NoiseStrategy::Hist:
        source = make_hist_source(hist);
        break;
      case NoiseStrategy::Gaussian:
        source = make_gaussian_source(c.gaussian_std);
        break;
      case NoiseStrategy::ModelPlusHist:
        source = make_model_plus_hist_source(std::move(model_maps), hist, c.model_plus_hist);
        break;
    }
    const std::string tag = file_label(to_string(strategy) + (sync ? "" : "_nosync") + "_" + group_names[g]);
    NdjsonLog log(log_dir / (tag + ".ndjson"));
    FinetuneHooks hooks;
    hooks.log = &log;
    hooks.checkpoint = log_dir / (tag + "_theta.pctw");
    auto state = DenoiserState::from_pretrained(pretrained, c.finetune.update_period, c.finetune.lr);
    auto res = finetune(std::move(state), *source, xs, loop, derive_seed(seed, g), hooks);
    for (std::size_t i : groups[g]) run.outputs[i] = denoise(res.final_model(), test.ldct[i]);
    run.results.push_back(std::move(res));
  }
  return run;
}

PipelineResult run_pipeline(const RunConfig& c) {
  std::filesystem::create_directories(c.output);
  save_run_config(c, c.output / "run_config.json");

  const Dataset ds = run_stage("dataset", [&] { return stage_dataset(c); });
  const DatasetSplit split = run_stage("split", [&] { return stage_split(c, ds); });
  const TestSet test = make_test_set(ds, split);

  const bool need_noise_models = [&] {
    for (auto s : c.strategies) {
      if (s == NoiseStrategy::Ensemble || s == NoiseStrategy::ModelPlusHist) return true;
    }
    return false;
  }();
  NoiseEnsemble ens;
  std::vector<NoiseMapSet> test_maps(test.ldct.size());
  if (need_noise_models && !c.schemes.empty()) {
    ens = run_stage("train-noise", [&] { return stage_train_noise(c, ds, split); });
    run_stage("noise-maps", [&] {
      for (std::size_t i = 0; i < test.ldct.size(); ++i) test_maps[i] = predict_noise_set(ens, test.ldct[i]);
    });
  }
  const auto diff_maps = train_noise_maps(ds, split);
  const NoiseHistogram hist(diff_maps);

  PipelineResult out;
  out.outputs[kInputRow] = test.ldct;
  for (SchemeKind scheme : c.schemes) {
    const std::string name = to_string(scheme);
    const DenoiserNet pre = run_stage("pretrain " + name, [&] { return stage_pretrain(c, ds, split, scheme); });
    out.outputs[method_label(scheme)] = denoise_all(pre, test.ldct);
    const auto log_dir = c.output / name / "finetune";
    const std::uint64_t base = derive_seed(c.seed, kFinetuneStream, static_cast<std::uint64_t>(scheme));
    for (NoiseStrategy strategy : c.strategies) {
      const std::string label = method_label(scheme, strategy_suffix(strategy));
      // Every strategy sees the same patch and selection seeds.
      auto run = run_stage("finetune " + label, [&] {
        return stage_finetune(c, pre, test, strategy, true, test_maps, hist, base, log_dir);
      });
      out.outputs[label] = std::move(run.outputs);
      if (strategy == NoiseStrategy::Ensemble && c.no_sync_ablation) {
        const std::string nl = method_label(scheme, "+Ours w/o sync");
        auto ns = run_stage("finetune " + nl, [&] {
          return stage_finetune(c, pre, test, strategy, false, test_maps, hist, base, log_dir);
        });
        out.outputs[nl] = std::move(ns.outputs);
      }
    }
  }

  out.report = run_stage("eval", [&] { return evaluate(out.outputs, test.ndct); });
  write_report(out.report, c.output);
  if (c.save_images && !test.ldct.empty()) {
    const auto dir = c.output / "images";
    std::filesystem::create_directories(dir);
    write_pgm(dir / "NDCT.pgm", test.ndct.front());
    for (const auto& [label, images] : out.outputs) write_pgm(dir / (file_label(label) + ".pgm"), images.front());
  }
  std::cerr << report_table(out.report);
  return out;
}

}  // namespace pct
