#include "cli_support.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "chc/error.hpp"

namespace chc::cli {

namespace {

thread_local std::string g_stage = "setup";
thread_local std::string g_failed;

const std::set<std::string> kIgnored{"help", "config", "out", "threads"};

std::string key_of(const CLI::Option* opt) {
  auto name = opt->get_single_name();
  std::replace(name.begin(), name.end(), '-', '_');
  return name;
}

const nlohmann::json* lookup(const nlohmann::json& config, const std::string& section, const std::string& key) {
  auto dashed = key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  for (const auto* scope : {config.contains(section) ? &config.at(section) : nullptr, &config}) {
    if (!scope || !scope->is_object()) continue;
    for (const auto& k : {key, dashed}) {
      if (scope->contains(k)) return &scope->at(k);
    }
  }
  return nullptr;
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number() || v.is_null()) return v.dump();
  throw ArgumentError("config value must be a scalar or a list of scalars: " + v.dump());
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Stage::Stage(std::string name) : previous_(g_stage), uncaught_(std::uncaught_exceptions()) {
  g_stage = std::move(name);
}
Stage::~Stage() {
  if (std::uncaught_exceptions() > uncaught_ && g_failed.empty()) g_failed = g_stage;
  g_stage = previous_;
}
const std::string& Stage::current() { return g_failed.empty() ? g_stage : g_failed; }

void apply_json_config(CLI::App& command, const nlohmann::json& config) {
  if (!config.is_object()) throw ArgumentError("config file must hold a JSON object");
  for (auto* opt : command.get_options()) {
    if (opt->get_lnames().empty() || opt->count() > 0) continue;
    const auto key = key_of(opt);
    if (kIgnored.count(key) && key != "out") continue;
    const auto* v = lookup(config, command.get_name(), key);
    if (!v) continue;
    if (v->is_array()) {
      for (const auto& e : *v) opt->add_result(scalar_text(e));
    } else {
      opt->add_result(scalar_text(*v));
    }
    opt->run_callback();
  }
}

nlohmann::json effective_config(const CLI::App& command) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto* opt : command.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto key = key_of(opt);
    if (kIgnored.count(key)) continue;
    if (opt->count() == 0) continue;
    const auto& r = opt->results();
    if (opt->get_expected_max() > 1 || r.size() > 1) {
      out[key] = r;
    } else {
      out[key] = r.front();
    }
  }
  return out;
}

Provenance Provenance::from(const CLI::App& command) {
  Provenance p;
  p.command = command.get_name();
  p.config = effective_config(command);
  nlohmann::json canonical{{"command", p.command}, {"options", p.config}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  p.hash = buf;
  return p;
}

std::string Provenance::comment() const {
  return std::string(kToolName) + " " + kVersion + " command=" + command + " config=" + hash;
}

std::string Provenance::meta() const {
  nlohmann::json doc;
  stamp(doc);
  return doc.dump();
}

void Provenance::stamp(nlohmann::json& doc) const {
  doc["tool"] = kToolName;
  doc["version"] = kVersion;
  doc["command"] = command;
  doc["config_hash"] = hash;
}

void write_json(const std::string& path, const nlohmann::json& doc) {
  Stage s("write");
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw Error("write failed: " + path);
}

void configure_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("CHC_THREADS")) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw ArgumentError(std::string("CHC_THREADS is not an integer: ") + env);
      }
    }
  }
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace chc::cli
