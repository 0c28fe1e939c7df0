#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace sollab {

// Minimal CSV writer with deterministic formatting ("%.17g").
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw std::runtime_error("cannot open for writing: " + path);
  }
  ~CsvWriter() {
    if (f_) std::fclose(f_);
  }
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cols) {
    for (size_t i = 0; i < cols.size(); ++i) {
      if (i) std::fputc(',', f_);
      std::fputs(cols[i].c_str(), f_);
    }
    std::fputc('\n', f_);
  }

  void field_int(long long v) {
    sep();
    std::fprintf(f_, "%lld", v);
  }
  void field_num(double v) {
    sep();
    std::fprintf(f_, "%.17g", v);
  }
  void field_str(const std::string& s) {
    sep();
    std::fputs(s.c_str(), f_);
  }
  void end_row() {
    std::fputc('\n', f_);
    at_row_start_ = true;
  }

  void close() {
    if (f_) {
      std::fclose(f_);
      f_ = nullptr;
    }
  }

 private:
  void sep() {
    if (!at_row_start_) std::fputc(',', f_);
    at_row_start_ = false;
  }
  std::string path_;
  std::FILE* f_ = nullptr;
  bool at_row_start_ = true;
};

}  // namespace sollab
