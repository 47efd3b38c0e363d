#include "adf/keyvalue.hpp"

#include <charconv>
#include <sstream>

#include "adf/common.hpp"

namespace adf {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

std::string format_key_values(const KeyValues& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::InvalidConfig, key + ": not a number: '" + value + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::InvalidConfig, key + ": not an integer: '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorCode::InvalidConfig, key + ": not a boolean: '" + value + "'");
}

std::string format_double(double v) {
  // Shortest text that parses back to the same double.
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "ok";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::InvalidAction: return "invalid_action";
    case ErrorCode::UnknownDrone: return "unknown_drone";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::InvalidPhase: return "invalid_phase";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace adf
