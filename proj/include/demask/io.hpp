#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace demask {

/// Writes to "<path>.tmp" and renames onto `path` on commit(). An uncommitted
/// file is removed on destruction, so failed runs leave no partial output.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path);
  ~AtomicFile();

  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Fixed two-decimal rendering used for every score column.
std::string format_score(double value);

}  // namespace demask
