#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace latentflow {

// Shortest exact decimal representation of a double ("%.17g" round-trips).
std::string format_double(double v);

// CSV with optional '#' comment lines above the header row. Numeric cells
// are written so they round-trip bit-exactly.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& comments,
            const std::vector<std::string>& header);

  CsvWriter& cell(double v);
  CsvWriter& cell(int v);
  CsvWriter& cell(std::size_t v);
  CsvWriter& cell(const std::string& v);
  void end_row();

 private:
  std::ofstream out_;
  bool row_started_ = false;

  void sep();
};

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace latentflow
