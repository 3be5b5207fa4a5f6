#pragma once

// Minimal delimiter-separated-value writer. All numeric output goes through
// format_number so that artifacts are byte-stable across runs.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

namespace ctmdp {

/// Shortest round-trip representation of a double; "inf"/"-inf"/"nan" otherwise.
inline std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buffer, end);
}

inline std::string format_number(std::size_t value) { return std::to_string(value); }
inline std::string format_number(int value) { return std::to_string(value); }
inline std::string format_number(long value) { return std::to_string(value); }
inline std::string format_number(long long value) { return std::to_string(value); }
inline std::string format_number(unsigned value) { return std::to_string(value); }

class DsvWriter {
 public:
  explicit DsvWriter(std::ostream& out, char delimiter = ',') : out_(out), delimiter_(delimiter) {}

  void header(std::initializer_list<std::string_view> columns) {
    bool first = true;
    for (auto c : columns) {
      if (!first) out_ << delimiter_;
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((emit(fields, first)), ...);
    out_ << '\n';
  }

 private:
  template <typename T>
  void emit(const T& field, bool& first) {
    if (!first) out_ << delimiter_;
    first = false;
    if constexpr (std::is_convertible_v<T, std::string_view>) {
      out_ << std::string_view(field);
    } else if constexpr (std::is_same_v<T, bool>) {
      out_ << (field ? "true" : "false");
    } else {
      out_ << format_number(field);
    }
  }

  std::ostream& out_;
  char delimiter_;
};

}  // namespace ctmdp
