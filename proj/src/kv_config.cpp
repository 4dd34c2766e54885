#include "ttlift/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ttlift {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::pair<std::string, std::string> parse_kv_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(text) + "'");
  const std::string key(trim(text.substr(0, eq)));
  const std::string value(trim(text.substr(eq + 1)));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(text) + "'");
  return {key, value};
}

KvMap parse_kv(std::string_view text) {
  KvMap out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::pair<std::string, std::string> kv;
    try {
      kv = parse_kv_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!out.emplace(kv.first, kv.second).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + kv.first + "'");
  }
  return out;
}

KvMap read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str());
}

const std::string* KvBinder::take(const std::string& key) {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KvBinder::bind(const std::string& key, double& target) {
  const std::string* v = take(key);
  if (!v) return;
  try {
    std::size_t pos = 0;
    const double x = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument(*v);
    target = x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + *v + "'");
  }
}

void KvBinder::bind(const std::string& key, int& target) {
  const std::string* v = take(key);
  if (!v) return;
  int x = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + *v + "'");
  target = x;
}

void KvBinder::bind(const std::string& key, std::uint64_t& target) {
  const std::string* v = take(key);
  if (!v) return;
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + *v + "'");
  target = x;
}

void KvBinder::bind(const std::string& key, bool& target) {
  const std::string* v = take(key);
  if (!v) return;
  if (*v == "true" || *v == "1" || *v == "yes") {
    target = true;
  } else if (*v == "false" || *v == "0" || *v == "no") {
    target = false;
  } else {
    throw ConfigError("key '" + key + "': expected a boolean, got '" + *v + "'");
  }
}

void KvBinder::bind(const std::string& key, std::string& target) {
  if (const std::string* v = take(key)) target = *v;
}

void KvBinder::reject_unknown() const {
  for (const auto& [key, value] : values_)
    if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace ttlift
