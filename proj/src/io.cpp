#include "latentflow/io.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace latentflow {

std::string format_double(double v) {
  char buf[40];
  // %.17g is lossless for doubles; try shorter forms first for readability.
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& comments,
                     const std::vector<std::string>& header)
    : out_(path) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& c : comments) out_ << "# " << c << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << header[i];
  }
  out_ << "\n";
}

void CsvWriter::sep() {
  if (row_started_) out_ << ',';
  row_started_ = true;
}

CsvWriter& CsvWriter::cell(double v) {
  sep();
  out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::cell(int v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::cell(std::size_t v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  sep();
  out_ << v;
  return *this;
}

void CsvWriter::end_row() {
  out_ << "\n";
  row_started_ = false;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << contents;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace latentflow
