#include "pct/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pct/errors.hpp"

namespace pct {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t len, const char* what) {
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  float f32() {
    return std::bit_cast<float>(u32("float payload"));
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("weight file truncated while reading ") + what + " at byte " +
                      std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(std::span<const WeightEntry> entries) {
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    std::size_t count = 1;
    for (std::size_t d : e.dims) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= d;
    }
    if (count != e.values.size()) {
      throw ShapeError("weight entry '" + e.name + "' has " + std::to_string(e.values.size()) +
                       " values but dims imply " + std::to_string(count));
    }
    for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<WeightEntry> decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    throw DataError("not a weight file: bad magic (expected \"PCTW\")");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFormatVersion) {
    throw DataError("unsupported weight format version " + std::to_string(version) + " (expected " +
                    std::to_string(kWeightFormatVersion) + ")");
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<WeightEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    const std::uint32_t name_len = r.u32("name length");
    e.name = r.str(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.u32("dims"));
      total *= e.dims.back();
    }
    if (total * 4 > r.remaining()) {
      throw DataError("weight file truncated: entry '" + e.name + "' needs " + std::to_string(total * 4) +
                      " bytes, " + std::to_string(r.remaining()) + " left");
    }
    e.values.resize(total);
    for (auto& v : e.values) v = r.f32();
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("weight file has " + std::to_string(r.remaining()) + " trailing bytes");
  return entries;
}

void write_weight_file(const std::filesystem::path& path, std::span<const WeightEntry> entries) {
  const auto bytes = encode_weights(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

std::vector<WeightEntry> read_weight_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

std::vector<WeightEntry> snapshot(std::span<Parameter* const> params) {
  std::vector<WeightEntry> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back({p->name, p->dims, p->value});
  return out;
}

void restore(std::span<Parameter* const> params, std::span<const WeightEntry> entries) {
  if (params.size() != entries.size()) {
    throw DataError("topology mismatch: network has " + std::to_string(params.size()) + " parameter blocks, file has " +
                    std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != entries[i].name || params[i]->dims != entries[i].dims) {
      throw DataError("topology mismatch at block " + std::to_string(i) + ": expected '" + params[i]->name +
                      "', file has '" + entries[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = entries[i].values;
}

}  // namespace pct
