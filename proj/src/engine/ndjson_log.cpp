#include "pct/errors.hpp"
#include "pct/training.hpp"

namespace pct {

NdjsonLog::NdjsonLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.emplace(path, std::ios::app);
  if (!*out_) throw DataError("cannot open log " + path.string());
}

void NdjsonLog::write(const nlohmann::json& record) {
  if (!out_) return;
  *out_ << record.dump() << '\n';
  out_->flush();
}

}  // namespace pct
