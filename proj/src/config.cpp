#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "qfisc/cli.hpp"

namespace qfisc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::int64_t get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

template <typename F>
auto wrap_parse(F&& f, const std::string& key) {
  try {
    return f();
  } catch (const UsageError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(const json&, RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model", [](const json& v, RunConfig& c, const std::string& k) {
         c.scan.model = wrap_parse([&] { return parse_model(get_as<std::string>(v, k)); }, k);
       }},
      {"method", [](const json& v, RunConfig& c, const std::string& k) {
         c.scan.method = wrap_parse([&] { return parse_method(get_as<std::string>(v, k)); }, k);
       }},
      {"J", [](const json& v, RunConfig& c, const std::string& k) { c.scan.J = get_number(v, k); }},
      {"M", [](const json& v, RunConfig& c, const std::string& k) { c.scan.M = get_int(v, k); }},
      {"hbar", [](const json& v, RunConfig& c, const std::string& k) { c.hbar = get_number(v, k); }},
      {"beta", [](const json& v, RunConfig& c, const std::string& k) { c.scan.beta = get_number(v, k); }},
      {"k", [](const json& v, RunConfig& c, const std::string& k) { c.scan.k = get_number(v, k); }},
      {"lambda", [](const json& v, RunConfig& c, const std::string& k) { c.lambda = get_number(v, k); }},
      {"t", [](const json& v, RunConfig& c, const std::string& k) {
         c.times.clear();
         if (v.is_array()) {
           for (const auto& e : v) c.times.push_back(get_int(e, k));
         } else {
           c.times.push_back(get_int(v, k));
         }
         if (c.times.empty()) throw ConfigError("config key 't' must not be empty");
         c.scan.t = c.times.back();
       }},
      {"grid", [](const json& v, RunConfig& c, const std::string& k) {
         const auto [nphi, nz] = parse_grid(get_as<std::string>(v, k));
         c.scan.n_phi = nphi;
         c.scan.n_z = nz;
       }},
      {"r", [](const json& v, RunConfig& c, const std::string& k) { c.scan.r = static_cast<int>(get_int(v, k)); }},
      {"reff", [](const json& v, RunConfig& c, const std::string& k) { c.scan.reff = get_number(v, k); }},
      {"cap_weights", [](const json& v, RunConfig& c, const std::string& k) {
         c.scan.cap_weights = wrap_parse([&] { return parse_cap_weights(get_as<std::string>(v, k)); }, k);
       }},
      {"rotor_sampler", [](const json& v, RunConfig& c, const std::string& k) {
         c.scan.rotor_sampler = wrap_parse([&] { return parse_rotor_sampler(get_as<std::string>(v, k)); }, k);
       }},
      {"n_mc", [](const json& v, RunConfig& c, const std::string& k) { c.scan.n_mc = get_int(v, k); }},
      {"seed", [](const json& v, RunConfig& c, const std::string& k) {
         const auto s = get_int(v, k);
         if (s < 0) throw ConfigError("config key 'seed' must be nonnegative");
         c.scan.seed = static_cast<std::uint64_t>(s);
       }},
      {"threads", [](const json& v, RunConfig& c, const std::string& k) { c.threads = static_cast<int>(get_int(v, k)); }},
      {"out", [](const json& v, RunConfig& c, const std::string& k) { c.out = get_as<std::string>(v, k); }},
      {"dry_run", [](const json& v, RunConfig& c, const std::string& k) { c.dry_run = get_as<bool>(v, k); }},
      {"json_errors", [](const json& v, RunConfig& c, const std::string& k) { c.json_errors = get_as<bool>(v, k); }},
      {"point", [](const json& v, RunConfig& c, const std::string& k) {
         c.points.clear();
         const auto add = [&](const json& e) {
           if (e.is_string()) {
             c.points.push_back(parse_point(e.get<std::string>()));
           } else if (e.is_array() && e.size() == 2) {
             c.points.push_back({get_number(e[0], k), get_number(e[1], k)});
           } else {
             throw ConfigError("config key 'point' entries must be \"a,b\" or [a, b]");
           }
         };
         if (v.is_array() && !v.empty() && (v[0].is_array() || v[0].is_string())) {
           for (const auto& e : v) add(e);
         } else {
           add(v);
         }
       }},
      {"energy", [](const json& v, RunConfig& c, const std::string& k) { c.energy = get_number(v, k); }},
      {"nmax", [](const json& v, RunConfig& c, const std::string& k) { c.n_max = static_cast<int>(get_int(v, k)); }},
      {"dt", [](const json& v, RunConfig& c, const std::string& k) { c.dt = get_number(v, k); }},
      {"substeps", [](const json& v, RunConfig& c, const std::string& k) { c.substeps = static_cast<int>(get_int(v, k)); }},
      {"t_max", [](const json& v, RunConfig& c, const std::string& k) { c.t_max = get_number(v, k); }},
      {"cutoff", [](const json& v, RunConfig& c, const std::string& k) { c.cutoff = get_number(v, k); }},
      {"cutoff_mode", [](const json& v, RunConfig& c, const std::string& k) {
         c.cutoff_mode = wrap_parse([&] { return parse_cutoff_mode(get_as<std::string>(v, k)); }, k);
       }},
      {"max_escape_fraction",
       [](const json& v, RunConfig& c, const std::string& k) { c.max_escape_fraction = get_number(v, k); }},
      {"r_min", [](const json& v, RunConfig& c, const std::string& k) { c.r_min = static_cast<int>(get_int(v, k)); }},
      {"r_max", [](const json& v, RunConfig& c, const std::string& k) { c.r_max = static_cast<int>(get_int(v, k)); }},
      {"memory_limit_mb", [](const json& v, RunConfig& c, const std::string& k) {
         const auto m = get_int(v, k);
         if (m < 0) throw ConfigError("config key 'memory_limit_mb' must be nonnegative");
         c.memory_limit_mb = static_cast<std::uint64_t>(m);
       }},
  };
  return table;
}

void apply_object(const json& obj, RunConfig& cfg, const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    const auto it = setters().find(key);
    if (it != setters().end()) {
      it->second(value, cfg, key);
    } else if (value.is_object()) {
      apply_object(value, cfg, prefix + key + ".");
    } else {
      throw ConfigError("unknown config key '" + prefix + key + "'");
    }
  }
}

}  // namespace

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("grid must look like NPHIxNZ, got '" + s + "'");
  try {
    std::size_t used_a = 0, used_b = 0;
    const int a = std::stoi(s.substr(0, x), &used_a);
    const int b = std::stoi(s.substr(x + 1), &used_b);
    if (used_a != x || used_b != s.size() - x - 1 || a < 1 || b < 1) throw std::invalid_argument("grid");
    return {a, b};
  } catch (const std::exception&) {
    throw ConfigError("grid must look like NPHIxNZ with positive integers, got '" + s + "'");
  }
}

SeriesPoint parse_point(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("point must look like A,B, got '" + s + "'");
  try {
    std::size_t ua = 0, ub = 0;
    const double a = std::stod(s.substr(0, comma), &ua);
    const double b = std::stod(s.substr(comma + 1), &ub);
    if (ua != comma || ub != s.size() - comma - 1) throw std::invalid_argument("point");
    return {a, b};
  } catch (const std::exception&) {
    throw ConfigError("point must look like A,B with numbers, got '" + s + "'");
  }
}

void apply_config_json(const std::string& text, RunConfig& cfg) {
  const json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!parsed.is_object()) throw ConfigError("config must be a JSON object");
  apply_object(parsed, cfg, "");
}

void load_config_file(const std::filesystem::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_json(buf.str(), cfg);
}

void RunConfig::validate() const {
  const bool hh = scan.model == Model::HenonHeiles;
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (hh) {
    if (command != "timeseries" && command != "bench") {
      throw ConfigError("henon-heiles supports the timeseries subcommand");
    }
    if (!(hbar > 0)) throw ConfigError("hbar must be positive");
    if (n_max < 1) throw ConfigError("nmax must be >= 1");
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (substeps < 2 || substeps % 2) throw ConfigError("substeps must be even and >= 2");
    if (!(t_max >= 0)) throw ConfigError("t_max must be nonnegative");
    if (!(cutoff > 0)) throw ConfigError("cutoff must be positive");
    if (!(max_escape_fraction >= 0 && max_escape_fraction <= 1)) {
      throw ConfigError("max_escape_fraction must lie in [0, 1]");
    }
    if (scan.n_mc < 1) throw ConfigError("n_mc must be >= 1");
    if (!(energy < 1.0 / 6)) throw ConfigError("energy must lie below the escape energy 1/6");
    return;
  }
  try {
    scan.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for (auto t : times) {
    if (t < 0) throw ConfigError("t values must be >= 0");
  }
  if (command == "converge-r") {
    if (scan.model != Model::KickedTop) throw ConfigError("converge-r supports the kicked top");
    if (r_min < 1 || r_max < r_min) throw ConfigError("need 1 <= r_min <= r_max");
  }
  if (scan.model == Model::KickedTop) {
    for (const auto& p : points) {
      if (!(std::abs(p.z) <= 1)) throw ConfigError("kicked-top points need z in [-1, 1]");
    }
  }
}

std::string effective_config_json(const RunConfig& c) {
  ojson j;
  j["command"] = c.command;
  j["scan"] = ojson::parse(spec_to_json(c.scan));
  j["t"] = c.times.empty() ? std::vector<std::int64_t>{c.scan.t} : c.times;
  ojson pts = ojson::array();
  for (const auto& p : c.points) pts.push_back({p.phi, p.z});
  j["points"] = pts;
  if (c.scan.model == Model::HenonHeiles) {
    j["hbar"] = c.hbar;
    j["lambda"] = c.lambda;
    j["energy"] = c.energy;
    j["nmax"] = c.n_max;
    j["dt"] = c.dt;
    j["substeps"] = c.substeps;
    j["t_max"] = c.t_max;
    j["n_mc"] = c.scan.n_mc;
    j["seed"] = c.scan.seed;
    j["cutoff"] = c.cutoff;
    j["cutoff_mode"] = to_string(c.cutoff_mode);
    j["max_escape_fraction"] = c.max_escape_fraction;
  }
  if (c.command == "converge-r") {
    j["r_min"] = c.r_min;
    j["r_max"] = c.r_max;
  }
  return j.dump();
}

}  // namespace qfisc
