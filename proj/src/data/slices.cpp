#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "pct/data.hpp"
#include "pct/errors.hpp"

namespace pct {

std::string to_string(Dose d) { return d == Dose::Low ? "low" : "normal"; }

Tensor CtSlice::tensor() const { return Tensor(Shape{1, 1, height, width}, pixels); }

CtSlice CtSlice::from_tensor(const Tensor& t, std::string subject_id, Dose dose, SliceSource source) {
  const Shape s = t.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("CtSlice::from_tensor expects (1,1,h,w), got " + s.str());
  CtSlice out;
  out.height = s.h;
  out.width = s.w;
  out.pixels = t.vec();
  out.subject_id = std::move(subject_id);
  out.dose = dose;
  out.source = source;
  return out;
}

double HuWindow::normalize(double hu) const { return std::clamp((hu - lower()) / width, 0.0, 1.0); }

double HuWindow::to_hu(double normalized) const { return lower() + normalized * width; }

namespace {

std::uint16_t encode_raw(float v, const RawEncoding& enc) {
  const double hu = enc.window.to_hu(v);
  const double raw = std::round((hu - enc.intercept) / enc.slope);
  return static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
}

float decode_raw(std::uint16_t raw, const RawEncoding& enc) {
  return static_cast<float>(enc.window.normalize(raw * enc.slope + enc.intercept));
}

}  // namespace

CtSlice load_raw_slice(const std::filesystem::path& path, std::size_t width, std::size_t height,
                       const RawEncoding& enc, std::string subject_id, Dose dose) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open raw slice " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::size_t expected = 2 * width * height;
  if (bytes.size() != expected) {
    throw DataError("raw slice " + path.string() + ": expected " + std::to_string(expected) + " bytes for " +
                    std::to_string(width) + "x" + std::to_string(height) + " u16, got " +
                    std::to_string(bytes.size()));
  }
  CtSlice s;
  s.width = width;
  s.height = height;
  s.pixels.resize(width * height);
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    const auto raw = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    s.pixels[i] = decode_raw(raw, enc);
  }
  s.subject_id = std::move(subject_id);
  s.dose = dose;
  s.source = SliceSource::RawFile;
  return s;
}

void write_raw_slice(const std::filesystem::path& path, const CtSlice& slice, const RawEncoding& enc) {
  std::vector<unsigned char> bytes(2 * slice.pixels.size());
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const std::uint16_t raw = encode_raw(slice.pixels[i], enc);
    bytes[2 * i] = static_cast<unsigned char>(raw & 0xFF);
    bytes[2 * i + 1] = static_cast<unsigned char>(raw >> 8);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

CtSlice quantize(const CtSlice& slice, const RawEncoding& enc) {
  CtSlice out = slice;
  for (auto& v : out.pixels) v = decode_raw(encode_raw(v, enc), enc);
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image, float lo, float hi) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_pgm expects a (1,1,h,w) image, got " + s.str());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << "P5\n" << s.w << " " << s.h << "\n65535\n";
  std::vector<unsigned char> bytes(2 * image.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp((image[i] - lo) / span, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    bytes[2 * i] = static_cast<unsigned char>(q >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

void write_pgm(const std::filesystem::path& path, const CtSlice& slice) { write_pgm(path, slice.tensor()); }

}  // namespace pct
