#include "pct/dataset.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pct/errors.hpp"
#include "pct/rng.hpp"

namespace pct {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSubjectStream = 0x5355424aull;
constexpr std::uint64_t kPhantomStream = 0x5048414eull;
constexpr std::uint64_t kRealizationStream = 0x5245414cull;

std::string subject_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%02zu", i + 1);
  return buf;
}

std::string slice_file(const std::string& subject, std::size_t k, const char* dose) {
  return subject + "_s" + std::to_string(k) + "_" + dose + ".raw";
}

}  // namespace

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : subjects) ids.push_back(s.id);
  return ids;
}

const SubjectData& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw DataError("dataset has no subject '" + id + "'");
}

std::size_t Dataset::slice_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.ldct.size();
  return n;
}

std::uint64_t realization_seed(const SynthSpec& spec, std::size_t subject, std::size_t slice, std::uint64_t r) {
  return derive_seed(derive_seed(spec.seed, kRealizationStream, subject), slice, r);
}

Dataset synth_dataset(const SynthSpec& spec, const RawEncoding& encoding) {
  if (spec.subjects == 0 || spec.slices_per_subject == 0) throw ConfigError("synth: need at least one slice");
  Dataset ds;
  ds.synthetic = true;
  ds.spec = spec;
  ds.encoding = encoding;
  ds.width = spec.size;
  ds.height = spec.size;
  for (std::size_t i = 0; i < spec.subjects; ++i) {
    SubjectData sd;
    sd.id = subject_name(i);
    sd.subject_seed = derive_seed(spec.seed, kSubjectStream, i);
    for (std::size_t k = 0; k < spec.slices_per_subject; ++k) {
      const std::uint64_t ps = derive_seed(spec.seed, kPhantomStream, i * 1000 + k);
      sd.phantom_seeds.push_back(ps);
      CtSlice ndct = quantize(synth_phantom(ps, spec.size), encoding);
      ndct.subject_id = sd.id;
      CtSlice ldct = quantize(
          synth_ldct(ndct, spec.dose_factor, sd.subject_seed, realization_seed(spec, i, k, 0), spec.noise), encoding);
      ldct.subject_id = sd.id;
      sd.ndct.push_back(std::move(ndct));
      sd.ldct.push_back(std::move(ldct));
    }
    ds.subjects.push_back(std::move(sd));
  }
  return ds;
}

CtSlice ldct_realization(const Dataset& ds, std::size_t subject, std::size_t slice, std::uint64_t r) {
  if (!ds.synthetic) throw DataError("independent LDCT realizations exist only for synthetic datasets");
  const SubjectData& sd = ds.subjects.at(subject);
  CtSlice out = quantize(synth_ldct(sd.ndct.at(slice), ds.spec.dose_factor, sd.subject_seed,
                                    realization_seed(ds.spec, subject, slice, r), ds.spec.noise),
                         ds.encoding);
  out.subject_id = sd.id;
  return out;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw DataError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
  json subjects = json::array();
  for (const auto& sd : ds.subjects) {
    json slices = json::array();
    for (std::size_t k = 0; k < sd.ldct.size(); ++k) {
      const std::string nf = slice_file(sd.id, k, "ndct");
      const std::string lf = slice_file(sd.id, k, "ldct");
      write_raw_slice(dir / nf, sd.ndct[k], ds.encoding);
      write_raw_slice(dir / lf, sd.ldct[k], ds.encoding);
      json s{{"ndct", nf}, {"ldct", lf}};
      if (k < sd.phantom_seeds.size()) s["phantom_seed"] = sd.phantom_seeds[k];
      slices.push_back(std::move(s));
    }
    subjects.push_back({{"id", sd.id}, {"subject_seed", sd.subject_seed}, {"slices", std::move(slices)}});
  }
  json m{{"format", "pct-dataset"},
         {"version", 1},
         {"synthetic", ds.synthetic},
         {"width", ds.width},
         {"height", ds.height},
         {"encoding",
          {{"slope", ds.encoding.slope},
           {"intercept", ds.encoding.intercept},
           {"window_center", ds.encoding.window.center},
           {"window_width", ds.encoding.window.width}}},
         {"subjects", std::move(subjects)}};
  if (ds.synthetic) {
    m["synth"] = {{"subjects", ds.spec.subjects},
                  {"slices_per_subject", ds.spec.slices_per_subject},
                  {"size", ds.spec.size},
                  {"dose_factor", ds.spec.dose_factor},
                  {"sigma0", ds.spec.noise.sigma0},
                  {"streak_amplitude", ds.spec.noise.streak_amplitude},
                  {"seed", ds.spec.seed}};
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw DataError("cannot write " + (dir / "manifest.json").string());
  f << m.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream f(path);
  if (!f) throw DataError("no dataset manifest at " + path.string());
  json m;
  try {
    f >> m;
    Dataset ds;
    ds.synthetic = m.value("synthetic", false);
    ds.width = m.at("width").get<std::size_t>();
    ds.height = m.at("height").get<std::size_t>();
    if (m.contains("encoding")) {
      const auto& e = m.at("encoding");
      ds.encoding.slope = e.value("slope", 1.0);
      ds.encoding.intercept = e.value("intercept", -1024.0);
      ds.encoding.window.center = e.value("window_center", 40.0);
      ds.encoding.window.width = e.value("window_width", 400.0);
    }
    if (ds.synthetic) {
      const auto& s = m.at("synth");
      ds.spec.subjects = s.at("subjects").get<std::size_t>();
      ds.spec.slices_per_subject = s.at("slices_per_subject").get<std::size_t>();
      ds.spec.size = s.at("size").get<std::size_t>();
      ds.spec.dose_factor = s.at("dose_factor").get<double>();
      ds.spec.noise.sigma0 = s.at("sigma0").get<double>();
      ds.spec.noise.streak_amplitude = s.at("streak_amplitude").get<double>();
      ds.spec.seed = s.at("seed").get<std::uint64_t>();
    }
    for (const auto& sj : m.at("subjects")) {
      SubjectData sd;
      sd.id = sj.at("id").get<std::string>();
      sd.subject_seed = sj.value("subject_seed", std::uint64_t{0});
      for (const auto& s : sj.at("slices")) {
        if (s.contains("phantom_seed")) sd.phantom_seeds.push_back(s.at("phantom_seed").get<std::uint64_t>());
        CtSlice n = load_raw_slice(dir / s.at("ndct").get<std::string>(), ds.width, ds.height, ds.encoding, sd.id,
                                   Dose::Normal);
        CtSlice l = load_raw_slice(dir / s.at("ldct").get<std::string>(), ds.width, ds.height, ds.encoding, sd.id,
                                   Dose::Low);
        if (ds.synthetic) {
          n.source = SliceSource::Synthetic;
          l.source = SliceSource::Synthetic;
        }
        sd.ndct.push_back(std::move(n));
        sd.ldct.push_back(std::move(l));
      }
      ds.subjects.push_back(std::move(sd));
    }
    if (ds.subjects.empty()) throw DataError("dataset manifest lists no subjects");
    return ds;
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace pct
