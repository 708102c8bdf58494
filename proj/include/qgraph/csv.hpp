#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/errors.hpp"

namespace qgraph {

// All emitted CSVs: header row, comma separator, 17 significant digits,
// LF line endings regardless of platform. Comment lines start with '#'.

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return body;
}

inline std::string spectrum_csv(const std::vector<double>& ks) {
  std::string body = "index,k\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    body += std::to_string(i + 1);
    body += ',';
    body += format_number(ks[i]);
    body += '\n';
  }
  return body;
}

// Parses `index,k` rows; returns nullopt on any structural defect so cache
// readers can fall back to recomputation instead of failing the run.
inline std::optional<std::vector<double>> parse_spectrum_csv(const std::string& body) {
  std::vector<double> ks;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < body.size()) {
    std::size_t eol = body.find('\n', pos);
    if (eol == std::string::npos) return std::nullopt;  // missing final LF
    std::string line = body.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "index,k") return std::nullopt;
      saw_header = true;
      continue;
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) return std::nullopt;
    char* tail = nullptr;
    const std::string ix = line.substr(0, comma);
    const std::string kv = line.substr(comma + 1);
    const long long index = std::strtoll(ix.c_str(), &tail, 10);
    if (tail == ix.c_str() || *tail != '\0') return std::nullopt;
    if (index != static_cast<long long>(ks.size()) + 1) return std::nullopt;
    const double k = std::strtod(kv.c_str(), &tail);
    if (tail == kv.c_str() || *tail != '\0') return std::nullopt;
    ks.push_back(k);
  }
  if (!saw_header) return std::nullopt;
  return ks;
}

// Distribution curve: rows `delta,density` or `delta,cdf`; an optional
// delta peak goes into a trailing comment `# peak,<position>,<mass>`.
inline std::string distribution_csv(const std::vector<std::pair<double, double>>& rows,
                                    bool is_cdf,
                                    std::optional<std::pair<double, double>> peak = {}) {
  std::string body = is_cdf ? "delta,cdf\n" : "delta,density\n";
  for (const auto& [x, y] : rows) {
    body += format_number(x);
    body += ',';
    body += format_number(y);
    body += '\n';
  }
  if (peak) {
    body += "# peak,";
    body += format_number(peak->first);
    body += ',';
    body += format_number(peak->second);
    body += '\n';
  }
  return body;
}

// Deviation curve delta -> F_empirical - F_reference.
inline std::string deviation_csv(const std::vector<std::pair<double, double>>& rows) {
  std::string body = "delta,deviation\n";
  for (const auto& [x, y] : rows) {
    body += format_number(x);
    body += ',';
    body += format_number(y);
    body += '\n';
  }
  return body;
}

inline std::string spacing_csv(const std::vector<double>& deltas) {
  std::string body = "index,delta\n";
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    body += std::to_string(i + 1);
    body += ',';
    body += format_number(deltas[i]);
    body += '\n';
  }
  return body;
}

// FNV-1a 64-bit; used for cache keys and cache-file integrity stamps.
inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace qgraph
