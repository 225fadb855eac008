#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ckann {

// Error categories map onto CLI exit codes: input -> 2, consistency -> 3,
// numeric -> 4.
enum class ErrorKind { Input, Consistency, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::Input, msg) {}
};

struct MalformedTriple : Error {
  MalformedTriple(std::size_t line_no, const std::string& msg)
      : Error(ErrorKind::Input,
              "malformed triple at line " + std::to_string(line_no) + ": " + msg),
        line(line_no) {}
  std::size_t line;
};

struct MalformedAlias : Error {
  MalformedAlias(std::size_t line_no, const std::string& msg)
      : Error(ErrorKind::Input,
              "malformed alias at line " + std::to_string(line_no) + ": " + msg),
        line(line_no) {}
  std::size_t line;
};

struct UnknownEntity : Error {
  explicit UnknownEntity(const std::string& what)
      : Error(ErrorKind::Input, "unknown entity: " + what) {}
};

struct UnknownSurface : Error {
  explicit UnknownSurface(const std::string& surface)
      : Error(ErrorKind::Input, "surface not in alias dictionary: " + surface) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg)
      : Error(ErrorKind::Consistency, "dimension mismatch: " + msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg)
      : Error(ErrorKind::Consistency, "format error: " + msg) {}
};

struct EmptyKnowledgeSequence : Error {
  EmptyKnowledgeSequence()
      : Error(ErrorKind::Input, "knowledge sequence has no mentions") {}
};

struct NodeSetMismatch : Error {
  explicit NodeSetMismatch(const std::string& msg)
      : Error(ErrorKind::Consistency, "node set mismatch: " + msg) {}
};

struct EmptySentence : Error {
  EmptySentence() : Error(ErrorKind::Input, "empty sentence") {}
};

struct MalformedRecord : Error {
  MalformedRecord(std::size_t line_no, const std::string& msg)
      : Error(ErrorKind::Input,
              "malformed record at line " + std::to_string(line_no) + ": " + msg),
        line(line_no) {}
  std::size_t line;
};

struct LabelError : Error {
  explicit LabelError(const std::string& msg)
      : Error(ErrorKind::Input, "label error: " + msg) {}
};

struct EmptyCandidates : Error {
  explicit EmptyCandidates(const std::string& qid)
      : Error(ErrorKind::Input, "question has no candidates: " + qid) {}
};

struct SyntheticSpecError : Error {
  explicit SyntheticSpecError(const std::string& msg)
      : Error(ErrorKind::Input, "invalid synthetic spec: " + msg) {}
};

struct NoPositive : Error {
  explicit NoPositive(const std::string& qid)
      : Error(ErrorKind::Input, "no positive label for question " + qid) {}
};

struct UnknownQid : Error {
  explicit UnknownQid(const std::string& qid)
      : Error(ErrorKind::Input, "qid not found in split: " + qid) {}
};

struct ConfigMismatch : Error {
  explicit ConfigMismatch(const std::string& msg)
      : Error(ErrorKind::Consistency, "config mismatch: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg)
      : Error(ErrorKind::Input, "config error: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg)
      : Error(ErrorKind::Numeric, msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the project goes through this wrapper
// so that seeded runs are reproducible across compilers and standard
// libraries (std::uniform_*_distribution is implementation-defined).
// xoshiro-style splitmix init over a 64-bit state, then a standard mt19937_64
// stream with hand-rolled draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

  std::uint64_t next_u64() {
    // splitmix64: small, fast, passes BigCrush for this use.
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Rejection sampling to avoid modulo bias.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw NumericError("uniform_index over empty range");
    std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  bool coin() { return (next_u64() & 1ULL) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream (for per-component seeding).
  Rng derive(std::uint64_t tag) const {
    return Rng(state_ ^ (0x632be59bd9b4e019ULL * (tag + 1)));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return x ^ (x >> 27);
  }
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Small string / file helpers.

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool file_exists(const std::string& path) {
  std::ifstream in(path);
  return static_cast<bool>(in);
}

// Round-trippable double formatting for text file formats.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// FNV-1a, used for config/dataset fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

}  // namespace ckann
