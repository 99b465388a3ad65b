#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pct/data.hpp"

namespace pct {

struct SynthSpec {
  std::size_t subjects = 10;
  std::size_t slices_per_subject = 8;
  std::size_t size = 128;
  double dose_factor = 0.25;
  LdctNoiseSpec noise{};
  std::uint64_t seed = 0;

  bool operator==(const SynthSpec&) const = default;
};

struct SubjectData {
  std::string id;
  std::uint64_t subject_seed = 0;        // drives the streak character
  std::vector<std::uint64_t> phantom_seeds;
  std::vector<CtSlice> ndct;
  std::vector<CtSlice> ldct;
};

// Paired NDCT/LDCT slices grouped by subject. Pixels are always what a
// write/load round trip of the raw files produces.
struct Dataset {
  bool synthetic = true;
  SynthSpec spec{};  // meaningful only for synthetic datasets
  RawEncoding encoding{};
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<SubjectData> subjects;

  std::vector<std::string> subject_ids() const;
  const SubjectData& subject(const std::string& id) const;
  std::size_t slice_count() const;
};

Dataset synth_dataset(const SynthSpec& spec, const RawEncoding& encoding = {});

// Noise-realization seed of slice `slice` of subject `subject`; realization 0
// is the stored LDCT, 1 the independent second draw used by Noise2Noise.
std::uint64_t realization_seed(const SynthSpec& spec, std::size_t subject, std::size_t slice, std::uint64_t r);

// Another independent LDCT draw of the same phantom (synthetic datasets only).
CtSlice ldct_realization(const Dataset& ds, std::size_t subject, std::size_t slice, std::uint64_t r);

// Directory of `<subject>_s<k>_{ndct,ldct}.raw` files plus manifest.json.
// Refuses a non-empty directory unless `force`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir, bool force = false);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace pct
