#include "vpfp/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include <json.hpp>

namespace vpfp {

using nlohmann::json;

std::string_view to_string(TheoremMode mode) {
  switch (mode) {
    case TheoremMode::free:
      return "free";
    case TheoremMode::thm1:
      return "thm1";
    case TheoremMode::thm2:
      return "thm2";
    case TheoremMode::thm3:
      return "thm3";
  }
  return "free";
}

TheoremMode parse_theorem_mode(std::string_view name) {
  for (auto m : {TheoremMode::free, TheoremMode::thm1, TheoremMode::thm2, TheoremMode::thm3})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected free, thm1, thm2 or thm3)");
}

namespace {

constexpr Metric kAllMetrics[] = {Metric::deviation, Metric::sup_deviation, Metric::exceedance, Metric::w2,
                                  Metric::h1,        Metric::l1,            Metric::ckp,        Metric::pde_l1};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string fraction_text(int d) { return d == 1 ? "1" : "1/" + std::to_string(d); }

class Reader {
 public:
  std::vector<std::string> violations;

  void fail(const std::string& path, const std::string& message) { violations.push_back(path + ": " + message); }

  template <class T>
  std::optional<T> get(const json& obj, const char* key, const std::string& base) {
    const std::string path = base + "/" + key;
    if (!obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(path, "wrong type");
      return std::nullopt;
    }
  }

  template <class T>
  void read(const json& obj, const char* key, const std::string& base, T& target) {
    if (auto v = get<T>(obj, key, base)) target = *v;
  }

  // a scalar or a list of scalars
  template <class T>
  void read_list(const json& obj, const char* key, const std::string& base, std::vector<T>& target) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    try {
      target = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
    } catch (const json::exception&) {
      fail(base + "/" + key, "wrong type");
    }
  }

  template <class E, class Parse>
  void read_enum(const json& obj, const char* key, const std::string& base, E& target, Parse parse) {
    if (auto v = get<std::string>(obj, key, base)) {
      try {
        target = parse(*v);
      } catch (const ConfigError& e) {
        fail(base + "/" + key, e.what());
      }
    }
  }

  void check_keys(const json& obj, const std::string& base, std::initializer_list<const char*> known) {
    for (const auto& item : obj.items()) {
      const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
      if (!ok) fail(base + "/" + item.key(), "unknown field");
    }
  }
};

void validate_modes(const ExperimentConfig& c, Reader& r) {
  const int d = c.dim;
  auto positive_sigma = [&](const char* mode) {
    for (std::size_t i = 0; i < c.sigma.size(); ++i)
      if (!(c.sigma[i] > 0.0))
        r.fail("/sigma/" + std::to_string(i), std::string("sigma must be > 0 in ") + mode + " mode");
  };
  auto delta_range = [&] {
    if (!(c.delta > 0.0)) r.fail("/delta", "delta must be > 0");
    if (!(c.delta < 1.0 / d)) r.fail("/delta", "delta must be < " + fraction_text(d));
  };

  switch (c.mode) {
    case TheoremMode::free:
      if (!(c.delta > 0.0)) r.fail("/delta", "delta must be > 0");
      return;
    case TheoremMode::thm1:
      delta_range();
      positive_sigma("thm1");
      if (c.family != KernelFamily::lp) r.fail("/kernel/family", "thm1 mode uses the lp kernel");
      return;
    case TheoremMode::thm3:
      delta_range();
      if (c.initial.m0 <= 3.0) r.fail("/initial/m0", "thm3 mode assumes a velocity moment m0 > 3");
      return;
    case TheoremMode::thm2: {
      positive_sigma("thm2");
      if (d != 3) r.fail("/dim", "thm2 mode requires dim = 3");
      if (c.family != KernelFamily::hlp) r.fail("/kernel/family", "thm2 mode uses the hlp kernel");
      if (!c.lambda2) {
        r.fail("/lambda2", "lambda2 is required in thm2 mode");
        return;
      }
      if (!c.lambda1) {
        r.fail("/lambda1", "lambda1 is required in thm2 mode");
        return;
      }
      const double l2 = *c.lambda2;
      const double l1 = *c.lambda1;
      bool ok = true;
      if (!(l2 > 0.3 && l2 < 1.0 / 3.0)) {
        r.fail("/lambda2", "lambda2 must lie in (3/10, 1/3)");
        ok = false;
      }
      if (!(l1 > 0.0 && l1 < l2 / 3.0)) {
        r.fail("/lambda1", "lambda1 must lie in (0, lambda2/3)");
        ok = false;
      }
      if (!ok) return;
      const double upper = std::min((l1 + 3.0 * l2 + 1.0) / 6.0, (1.0 - l2) / 2.0);
      if (!(c.delta >= 1.0 / 3.0)) r.fail("/delta", "delta must be >= 1/3 in thm2 mode");
      if (!(c.delta < upper)) {
        std::ostringstream os;
        os.precision(17);
        os << "delta must be < min{(lambda1 + 3 lambda2 + 1)/6, (1 - lambda2)/2} = " << upper;
        r.fail("/delta", os.str());
      }
      return;
    }
  }
}

}  // namespace

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::deviation:
      return "deviation";
    case Metric::sup_deviation:
      return "sup_deviation";
    case Metric::exceedance:
      return "exceedance";
    case Metric::w2:
      return "w2";
    case Metric::h1:
      return "h1";
    case Metric::l1:
      return "l1";
    case Metric::ckp:
      return "ckp_slack";
    case Metric::pde_l1:
      return "pde_l1";
  }
  return "deviation";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics)
    if (to_string(m) == name) return m;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

ConfigViolations::ConfigViolations(std::vector<std::string> violations)
    : ConfigError(join(violations, "\n")), violations_(std::move(violations)) {}

double ExperimentConfig::effective_threshold_exponent() const {
  if (threshold_exponent) return *threshold_exponent;
  if (mode == TheoremMode::thm2 && lambda2) return *lambda2;
  return delta;
}

double ExperimentConfig::threshold(std::size_t n_particles) const {
  return std::pow(static_cast<double>(n_particles), -effective_threshold_exponent());
}

KernelSpec ExperimentConfig::kernel_spec(std::size_t n_particles) const {
  return KernelSpec::make(dim, family, delta, static_cast<std::int64_t>(n_particles), sign);
}

ExperimentConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigViolations({std::string("/: invalid JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigViolations({"/: top level must be an object"});

  Reader r;
  ExperimentConfig c;
  r.check_keys(root, "",
               {"mode", "dim", "n", "delta", "sigma", "lambda1", "lambda2", "kernel", "initial", "dt", "t_end",
                "output_times", "seeds", "metrics", "threshold_exponent", "force_path", "mean_field", "phase_grid",
                "snapshots", "out", "threads"});

  r.read_enum(root, "mode", "", c.mode, parse_theorem_mode);
  r.read(root, "dim", "", c.dim);
  r.read_list(root, "n", "", c.n);
  r.read(root, "delta", "", c.delta);
  r.read_list(root, "sigma", "", c.sigma);
  if (auto v = r.get<double>(root, "lambda1", "")) c.lambda1 = v;
  if (auto v = r.get<double>(root, "lambda2", "")) c.lambda2 = v;
  if (auto v = r.get<double>(root, "threshold_exponent", "")) c.threshold_exponent = v;
  if (root.contains("dt") && !(root["dt"].is_string() && root["dt"] == "auto")) {
    if (auto v = r.get<double>(root, "dt", "")) c.dt = v;
  }
  r.read(root, "t_end", "", c.t_end);
  r.read_list(root, "output_times", "", c.output_times);
  r.read_list(root, "seeds", "", c.seeds);
  r.read_enum(root, "force_path", "", c.force_path, parse_force_path);
  r.read(root, "snapshots", "", c.snapshots);
  r.read(root, "out", "", c.out);
  r.read(root, "threads", "", c.threads);

  if (root.contains("metrics")) {
    std::vector<std::string> names;
    r.read_list(root, "metrics", "", names);
    c.metrics.clear();
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        const Metric m = parse_metric(names[i]);
        if (std::find(c.metrics.begin(), c.metrics.end(), m) == c.metrics.end()) c.metrics.push_back(m);
      } catch (const ConfigError& e) {
        r.fail("/metrics/" + std::to_string(i), e.what());
      }
    }
    // keep the canonical column order regardless of listing order
    std::sort(c.metrics.begin(), c.metrics.end());
  }

  if (root.contains("kernel")) {
    const json& k = root["kernel"];
    if (!k.is_object()) {
      r.fail("/kernel", "must be an object");
    } else {
      r.check_keys(k, "/kernel", {"family", "sign"});
      r.read_enum(k, "family", "/kernel", c.family, parse_kernel_family);
      r.read(k, "sign", "/kernel", c.sign);
      if (c.sign != 1 && c.sign != -1) r.fail("/kernel/sign", "sign must be +1 or -1");
    }
  }
  if (root.contains("initial")) {
    const json& k = root["initial"];
    if (!k.is_object()) {
      r.fail("/initial", "must be an object");
    } else {
      r.check_keys(k, "/initial", {"kind", "s_x", "s_v", "q_v", "alpha", "beta", "m0"});
      r.read_enum(k, "kind", "/initial", c.initial.kind, parse_initial_kind);
      r.read(k, "s_x", "/initial", c.initial.s_x);
      r.read(k, "s_v", "/initial", c.initial.s_v);
      r.read(k, "q_v", "/initial", c.initial.q_v);
      r.read(k, "alpha", "/initial", c.initial.alpha);
      r.read(k, "beta", "/initial", c.initial.beta);
      r.read(k, "m0", "/initial", c.initial.m0);
    }
  }
  if (root.contains("mean_field")) {
    const json& k = root["mean_field"];
    if (!k.is_object()) {
      r.fail("/mean_field", "must be an object");
    } else {
      r.check_keys(k, "/mean_field", {"copies", "cells", "bandwidth_cells", "refresh_every", "quantize_edge"});
      r.read(k, "copies", "/mean_field", c.mean_field_copies);
      r.read(k, "cells", "/mean_field", c.mean_field.cells);
      r.read(k, "bandwidth_cells", "/mean_field", c.mean_field.bandwidth_cells);
      r.read(k, "refresh_every", "/mean_field", c.refresh_every);
      r.read(k, "quantize_edge", "/mean_field", c.mean_field.quantize_edge);
    }
  }
  if (root.contains("phase_grid")) {
    const json& k = root["phase_grid"];
    if (!k.is_object()) {
      r.fail("/phase_grid", "must be an object");
    } else {
      r.check_keys(k, "/phase_grid", {"cells", "bandwidth_cells"});
      r.read(k, "cells", "/phase_grid", c.phase_grid.cells);
      r.read(k, "bandwidth_cells", "/phase_grid", c.phase_grid.bandwidth_cells);
    }
  }
  c.initial.dim = c.dim;

  // well-formedness
  if (c.dim < 1 || c.dim > 3) r.fail("/dim", "dim must be 1, 2 or 3");
  if (c.n.empty()) r.fail("/n", "particle count list is empty");
  for (std::size_t i = 0; i < c.n.size(); ++i)
    if (c.n[i] < 2) r.fail("/n/" + std::to_string(i), "particle count must be >= 2");
  if (std::set<std::size_t>(c.n.begin(), c.n.end()).size() != c.n.size()) r.fail("/n", "particle counts repeat");
  if (c.seeds.empty()) r.fail("/seeds", "seeds list is empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    r.fail("/seeds", "seeds repeat");
  if (c.sigma.empty()) r.fail("/sigma", "sigma list is empty");
  for (std::size_t i = 0; i < c.sigma.size(); ++i)
    if (!(c.sigma[i] >= 0.0) || !std::isfinite(c.sigma[i]))
      r.fail("/sigma/" + std::to_string(i), "sigma must be finite and >= 0");
  if (!(c.t_end > 0.0)) r.fail("/t_end", "t_end must be > 0");
  if (c.dt && !(*c.dt > 0.0 && *c.dt <= c.t_end)) r.fail("/dt", "dt must lie in (0, t_end]");
  for (std::size_t i = 0; i < c.output_times.size(); ++i) {
    const double t = c.output_times[i];
    if (!(t >= 0.0 && t <= c.t_end)) r.fail("/output_times/" + std::to_string(i), "output time outside [0, t_end]");
    if (i > 0 && !(t > c.output_times[i - 1])) r.fail("/output_times/" + std::to_string(i), "output times must increase");
  }
  if (c.mean_field.cells < 8) r.fail("/mean_field/cells", "mean-field grid needs at least 8 cells per axis");
  if (!(c.mean_field.bandwidth_cells >= 0.0)) r.fail("/mean_field/bandwidth_cells", "bandwidth must be >= 0");
  if (c.refresh_every < 1) r.fail("/mean_field/refresh_every", "refresh_every must be >= 1");
  if (c.phase_grid.cells < 2) r.fail("/phase_grid/cells", "phase grid needs at least 2 cells per axis");
  if (!(c.phase_grid.bandwidth_cells >= 0.0)) r.fail("/phase_grid/bandwidth_cells", "bandwidth must be >= 0");
  if (c.threads < 0) r.fail("/threads", "threads must be >= 0");
  if (c.out.empty()) r.fail("/out", "output directory is empty");
  if (c.family == KernelFamily::exact) r.fail("/kernel/family", "particle runs need a regularized kernel");
  if (c.family == KernelFamily::hlp && c.dim != 3) r.fail("/kernel/family", "hlp kernel requires dim = 3");
  if (std::find(c.metrics.begin(), c.metrics.end(), Metric::pde_l1) != c.metrics.end() && c.dim != 1)
    r.fail("/metrics", "pde_l1 requires dim = 1");
  if (c.dim >= 1 && c.dim <= 3) {
    try {
      c.initial.validate();
    } catch (const ConfigError& e) {
      r.fail("/initial", e.what());
    }
    validate_modes(c, r);
  }

  if (!r.violations.empty()) throw ConfigViolations(std::move(r.violations));
  return c;
}

std::string apply_overrides(std::string_view json_text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigViolations({std::string("/: invalid JSON: ") + e.what()});
  }
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    std::string pointer;
    std::size_t start = 0;
    while (start <= key.size()) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
      pointer += "/" + part;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    root[json::json_pointer(pointer)] = value;
  }
  return root.dump(2);
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = std::string(to_string(c.mode));
  j["dim"] = c.dim;
  j["n"] = c.n;
  j["delta"] = c.delta;
  j["sigma"] = c.sigma;
  if (c.lambda1) j["lambda1"] = *c.lambda1;
  if (c.lambda2) j["lambda2"] = *c.lambda2;
  j["kernel"] = {{"family", std::string(to_string(c.family))}, {"sign", c.sign}};
  j["initial"] = {{"kind", std::string(to_string(c.initial.kind))},
                  {"s_x", c.initial.s_x},
                  {"s_v", c.initial.s_v},
                  {"q_v", c.initial.q_v},
                  {"alpha", c.initial.alpha},
                  {"beta", c.initial.beta},
                  {"m0", c.initial.m0}};
  j["dt"] = c.dt ? json(*c.dt) : json("auto");
  j["t_end"] = c.t_end;
  j["output_times"] = c.output_times;
  j["seeds"] = c.seeds;
  std::vector<std::string> metrics;
  for (Metric m : c.metrics) metrics.emplace_back(to_string(m));
  j["metrics"] = metrics;
  j["threshold_exponent"] = c.effective_threshold_exponent();
  j["force_path"] = std::string(to_string(c.force_path));
  j["mean_field"] = {{"copies", c.mean_field_copies},
                     {"cells", c.mean_field.cells},
                     {"bandwidth_cells", c.mean_field.bandwidth_cells},
                     {"refresh_every", c.refresh_every},
                     {"quantize_edge", c.mean_field.quantize_edge}};
  j["phase_grid"] = {{"cells", c.phase_grid.cells}, {"bandwidth_cells", c.phase_grid.bandwidth_cells}};
  j["snapshots"] = c.snapshots;
  j["out"] = c.out;
  j["threads"] = c.threads;
  return j.dump(2);
}

int resolve_threads(int configured) {
  if (const char* env = std::getenv("VPFP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) throw ConfigError("VPFP_THREADS must be a nonnegative integer");
    return static_cast<int>(v);
  }
  return configured;
}

}  // namespace vpfp
