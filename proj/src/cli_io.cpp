#include "henon/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "henon/green.hpp"
#include "henon/manifolds.hpp"
#include "henon/measure.hpp"
#include "henon/periodic.hpp"

namespace henon::io {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef HENON_VERSION
#define HENON_VERSION "0.0.0"
#endif

const char* const kVersion = HENON_VERSION;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::DegenerateParameter:
    case ErrorKind::NotRealMap:
    case ErrorKind::Config:
    case ErrorKind::NotASaddle:
    case ErrorKind::NearResonance:
    case ErrorKind::NotApplicable:
      return kUsage;
    case ErrorKind::Overflow:
      return kSaturated;
    default:
      return kInternal;
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

json num(double v) { return format_double(v); }
json cnum(Complex z) { return json::array({num(z.real()), num(z.imag())}); }
json pnum(const Point2& p) { return json::array({cnum(p.x), cnum(p.y)}); }

}  // namespace

double parse_number(const json& j, std::string_view what) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) config_error(std::string(what) + ": expected a decimal string");
  const std::string& s = j.get_ref<const std::string&>();
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last || !std::isfinite(v))
    config_error(std::string(what) + ": cannot parse '" + s + "' as a number");
  return v;
}

long long parse_integer(const json& j, std::string_view what) {
  if (j.is_number_integer()) return j.get<long long>();
  if (!j.is_string()) config_error(std::string(what) + ": expected an integer string");
  const std::string& s = j.get_ref<const std::string&>();
  long long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    config_error(std::string(what) + ": cannot parse '" + s + "' as an integer");
  return v;
}

Complex parse_complex(const json& j, std::string_view what) {
  if (j.is_array() && j.size() == 2) return {parse_number(j[0], what), parse_number(j[1], what)};
  if (j.is_string() || j.is_number()) return {parse_number(j, what), 0.0};
  config_error(std::string(what) + ": expected [re, im]");
}

namespace {

Point2 parse_point(const json& j, std::string_view what) {
  if (!j.is_array() || j.size() != 2) config_error(std::string(what) + ": expected [x, y]");
  return {parse_complex(j[0], what), parse_complex(j[1], what)};
}

}  // namespace

ComposedMap parse_map(const json& j) {
  if (!j.is_object()) config_error("map: expected an object");
  try {
    if (j.contains("classical")) {
      const json& c = j.at("classical");
      if (!c.is_object() || !c.contains("a") || !c.contains("b")) config_error("map.classical: needs a and b");
      return from_classical_henon(parse_number(c.at("a"), "map.classical.a"), parse_number(c.at("b"), "map.classical.b"));
    }
    if (j.contains("factors")) {
      const json& fs = j.at("factors");
      if (!fs.is_array() || fs.empty()) config_error("map.factors: expected a nonempty list");
      std::vector<ElementaryFactor> factors;
      for (const json& f : fs) {
        if (!f.is_object() || !f.contains("p_coeffs") || !f.contains("delta"))
          config_error("map.factors[]: needs p_coeffs and delta");
        std::vector<Complex> coeffs;
        for (const json& c : f.at("p_coeffs")) coeffs.push_back(parse_complex(c, "p_coeffs"));
        factors.emplace_back(std::move(coeffs), parse_complex(f.at("delta"), "delta"));
      }
      return ComposedMap(std::move(factors));
    }
  } catch (const json::exception& e) {
    config_error(std::string("map: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(std::string("map: ") + e.what());
  }
  config_error("map: needs 'classical' or 'factors'");
}

json map_to_json(const ComposedMap& map) {
  if (map.classical())
    return {{"classical", {{"a", num(map.classical()->a)}, {"b", num(map.classical()->b)}}}};
  json fs = json::array();
  for (const ElementaryFactor& f : map.factors()) {
    json coeffs = json::array();
    for (Complex c : f.p_coeffs()) coeffs.push_back(cnum(c));
    fs.push_back({{"p_coeffs", coeffs}, {"delta", cnum(f.delta())}});
  }
  return {{"factors", fs}};
}

json RunConfig::canonical() const {
  return {{"command", command},
          {"config", doc},
          {"precision", precision == Precision::Extended ? "extended" : "double"},
          {"seed", std::to_string(seed)}};
}

std::string RunConfig::hash() const { return hex64(fnv1a(canonical().dump())); }

double RunConfig::number(const char* key, double fallback) const {
  return doc.contains(key) ? parse_number(doc.at(key), key) : fallback;
}

long long RunConfig::integer(const char* key, long long fallback) const {
  return doc.contains(key) ? parse_integer(doc.at(key), key) : fallback;
}

bool RunConfig::flag(const char* key, bool fallback) const {
  if (!doc.contains(key)) return fallback;
  const json& j = doc.at(key);
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_string()) {
    const std::string& s = j.get_ref<const std::string&>();
    if (s == "true") return true;
    if (s == "false") return false;
  }
  config_error(std::string(key) + ": expected true or false");
}

std::string RunConfig::text(const char* key, const std::string& fallback) const {
  if (!doc.contains(key)) return fallback;
  if (!doc.at(key).is_string()) config_error(std::string(key) + ": expected a string");
  return doc.at(key).get<std::string>();
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"green-raster", "periodic", "entropy-report",
                                              "manifold",     "homoclinic", "mu-sample"};
  return names;
}

namespace {

const std::set<std::string> kCommonKeys{"map", "seed", "precision"};
const std::set<std::string> kPeriodicKeys{"seed_density", "quasi_random", "real_density", "tol", "newton_max",
                                          "dedup_eps",    "margin",       "tol_im",       "escalation_rounds"};
const std::set<std::string> kRasterKeys{"side", "slice", "window", "nx", "ny", "tol", "n_max", "vmax",
                                        "saturation_threshold"};
const std::set<std::string> kChartKeys{"period", "saddle_index", "base_index", "order", "target_residual"};
const std::set<std::string> kIntersectionKeys{"s_inner",  "s_fundamental_domains", "t_inner", "t_fundamental_domains",
                                              "radial",   "angular", "intersection_tol", "intersection_newton_max",
                                              "transversality_threshold", "intersection_tol_im", "bounded_horizon"};

std::set<std::string> allowed_keys(const std::string& command) {
  std::set<std::string> k = kCommonKeys;
  auto add = [&k](const std::set<std::string>& s) { k.insert(s.begin(), s.end()); };
  if (command == "green-raster" || command == "mu-sample") {
    add(kRasterKeys);
  } else if (command == "periodic") {
    add(kPeriodicKeys);
    k.insert("n");
  } else if (command == "entropy-report") {
    add(kPeriodicKeys);
    add(kIntersectionKeys);
    k.insert({"N_max", "homoclinic_scan", "order", "target_residual"});
  } else if (command == "manifold") {
    add(kChartKeys);
    add(kPeriodicKeys);
    k.insert({"half_width", "resolution", "raster_tol", "n_max"});
  } else if (command == "homoclinic") {
    add(kChartKeys);
    add(kPeriodicKeys);
    add(kIntersectionKeys);
  }
  return k;
}

}  // namespace

RunConfig make_config(std::string command, json doc) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) config_error("unknown command '" + command + "'");
  if (!doc.is_object()) config_error("config: expected a JSON object");
  if (!doc.contains("map")) config_error("config: missing 'map'");
  RunConfig cfg;
  cfg.command = std::move(command);
  cfg.doc = std::move(doc);
  const std::set<std::string> allowed = allowed_keys(cfg.command);
  for (const auto& [key, value] : cfg.doc.items())
    if (!allowed.count(key)) config_error("config: unknown key '" + key + "' for " + cfg.command);
  if (cfg.doc.contains("seed")) {
    const long long s = parse_integer(cfg.doc.at("seed"), "seed");
    if (s < 0) config_error("seed: must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  const std::string p = cfg.text("precision", "double");
  if (p == "extended")
    cfg.precision = Precision::Extended;
  else if (p != "double")
    config_error("precision: expected double or extended");
  validate(cfg);
  return cfg;
}

RunConfig load_config(std::string command, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    config_error("config " + path.string() + ": " + e.what());
  }
  return make_config(std::move(command), std::move(doc));
}

namespace {

void require_positive(const RunConfig& cfg, const char* key) {
  if (cfg.has(key) && !(cfg.number(key, 1.0) > 0.0)) config_error(std::string(key) + ": must be > 0");
}

void require_at_least(const RunConfig& cfg, const char* key, long long lo) {
  if (cfg.has(key) && cfg.integer(key, lo) < lo)
    config_error(std::string(key) + ": must be >= " + std::to_string(lo));
}

ParamWindow raster_window(const RunConfig& cfg) {
  ParamWindow w{-2.0, 2.0, -2.0, 2.0, 64, 64};
  if (cfg.has("window")) {
    const json& j = cfg.doc.at("window");
    if (!j.is_object()) config_error("window: expected an object");
    for (const auto& [key, value] : j.items()) {
      const double v = parse_number(value, "window." + key);
      if (key == "u_min") w.u_min = v;
      else if (key == "u_max") w.u_max = v;
      else if (key == "v_min") w.v_min = v;
      else if (key == "v_max") w.v_max = v;
      else config_error("window: unknown key '" + key + "'");
    }
  }
  w.nx = static_cast<int>(cfg.integer("nx", 64));
  w.ny = static_cast<int>(cfg.integer("ny", 64));
  if (!(w.u_max > w.u_min) || !(w.v_max > w.v_min)) config_error("window: needs u_min < u_max and v_min < v_max");
  return w;
}

AffineSlice raster_slice(const RunConfig& cfg, std::string& label) {
  if (!cfg.has("slice")) {
    label = "real-plane";
    return AffineSlice::real_plane();
  }
  const json& j = cfg.doc.at("slice");
  if (!j.is_object() || !j.contains("type")) config_error("slice: needs a type");
  label = j.at("type").get<std::string>();
  try {
    AffineSlice s;
    if (label == "real-plane")
      s = AffineSlice::real_plane();
    else if (label == "complex-line")
      s = AffineSlice::complex_line(parse_point(j.at("base"), "slice.base"), parse_point(j.at("dir"), "slice.dir"));
    else if (label == "affine")
      s = {parse_point(j.at("base"), "slice.base"), parse_point(j.at("e1"), "slice.e1"),
           parse_point(j.at("e2"), "slice.e2")};
    else
      config_error("slice: unknown type '" + label + "'");
    s.validate();
    return s;
  } catch (const json::exception& e) {
    config_error(std::string("slice: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(std::string("slice: ") + e.what());
  }
}

GreenSide raster_side(const RunConfig& cfg) {
  const std::string s = cfg.text("side", "plus");
  if (s == "plus") return GreenSide::Plus;
  if (s == "minus") return GreenSide::Minus;
  config_error("side: expected plus or minus");
}

}  // namespace

void validate(const RunConfig& cfg) {
  (void)cfg.map();
  for (const char* key : {"tol", "dedup_eps", "margin", "tol_im", "target_residual", "half_width", "raster_tol",
                          "intersection_tol", "transversality_threshold", "intersection_tol_im", "s_inner", "t_inner"})
    require_positive(cfg, key);
  for (const char* key : {"nx", "ny", "resolution", "seed_density"}) require_at_least(cfg, key, 2);
  for (const char* key : {"n", "N_max", "period", "order", "n_max", "newton_max", "intersection_newton_max",
                          "radial", "angular", "bounded_horizon"})
    require_at_least(cfg, key, 1);
  for (const char* key : {"quasi_random", "real_density", "escalation_rounds", "saddle_index", "base_index",
                          "s_fundamental_domains", "t_fundamental_domains"})
    require_at_least(cfg, key, 0);
  if (cfg.command == "periodic" && !cfg.has("n")) config_error("periodic: missing 'n'");
  if (cfg.command == "green-raster" || cfg.command == "mu-sample") {
    raster_window(cfg);
    std::string label;
    raster_slice(cfg, label);
    raster_side(cfg);
    require_positive(cfg, "vmax");
    const double sat = cfg.number("saturation_threshold", 0.5);
    if (!(sat >= 0.0 && sat <= 1.0)) config_error("saturation_threshold: must lie in [0, 1]");
  }
  if (cfg.has("homoclinic_scan")) (void)cfg.flag("homoclinic_scan", false);
}

std::uint16_t scale_pixel(double v, double vmax) {
  if (!(v > 0.0) || !std::isfinite(v) || !(vmax > 0.0)) return 0;
  const double r = std::min(v / vmax, 1.0);
  return static_cast<std::uint16_t>(std::lround(65535.0 * r));
}

void write_pgm16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& pixels,
                 const std::string& comment) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Internal, "cannot write " + path.string());
  out << "P5\n# " << comment << "\n" << width << " " << height << "\n65535\n";
  std::string bytes;
  bytes.reserve(pixels.size() * 2);
  for (std::uint16_t p : pixels) {
    bytes.push_back(static_cast<char>(p >> 8));
    bytes.push_back(static_cast<char>(p & 0xff));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Internal, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

json to_json(const ResultEnvelope& e) {
  json payload = json::array();
  for (const PayloadFile& p : e.payload)
    payload.push_back({{"file", p.name}, {"checksum", hex64(p.checksum)}, {"bytes", p.bytes}});
  return {{"config_hash", e.config_hash}, {"version", e.version},   {"wall_clock_seconds", e.wall_clock},
          {"command", e.command},         {"exit_code", e.exit_code}, {"payload", payload},
          {"notes", e.notes}};
}

ResultEnvelope envelope_from_json(const json& j) {
  ResultEnvelope e;
  e.config_hash = j.at("config_hash").get<std::string>();
  e.version = j.at("version").get<std::string>();
  e.wall_clock = j.at("wall_clock_seconds").get<double>();
  e.command = j.at("command").get<std::string>();
  e.exit_code = j.at("exit_code").get<int>();
  for (const json& p : j.at("payload")) {
    PayloadFile f;
    f.name = p.at("file").get<std::string>();
    f.checksum = std::stoull(p.at("checksum").get<std::string>(), nullptr, 16);
    f.bytes = p.at("bytes").get<std::uintmax_t>();
    e.payload.push_back(std::move(f));
  }
  e.notes = j.at("notes").get<std::vector<std::string>>();
  return e;
}

fs::path cache_path(const fs::path& out_dir, const std::string& hash) { return out_dir / ".cache" / (hash + ".json"); }

CacheLookup cache_lookup(const fs::path& out_dir, const std::string& hash) {
  CacheLookup r;
  const fs::path p = cache_path(out_dir, hash);
  if (!fs::exists(p)) return r;
  r.state = CacheState::Corrupt;
  try {
    std::ifstream in(p, std::ios::binary);
    r.envelope = envelope_from_json(json::parse(in));
  } catch (const std::exception& e) {
    r.problem = std::string("unreadable envelope: ") + e.what();
    return r;
  }
  if (r.envelope.config_hash != hash) {
    r.problem = "envelope hash mismatch";
    return r;
  }
  if (r.envelope.version != kVersion) {
    r.problem = "envelope written by version " + r.envelope.version;
    return r;
  }
  for (const PayloadFile& f : r.envelope.payload) {
    const fs::path fp = out_dir / f.name;
    if (!fs::exists(fp)) {
      r.problem = "missing payload " + f.name;
      return r;
    }
    if (file_checksum(fp) != f.checksum) {
      r.problem = "checksum mismatch for " + f.name;
      return r;
    }
  }
  r.state = CacheState::Hit;
  return r;
}

void cache_store(const fs::path& out_dir, const ResultEnvelope& envelope) {
  const fs::path dir = out_dir / ".cache";
  fs::create_directories(dir);
  const fs::path final_path = cache_path(out_dir, envelope.config_hash);
  const fs::path tmp = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Internal, "cannot write " + tmp.string());
    out << to_json(envelope).dump(2) << "\n";
  }
  fs::rename(tmp, final_path);
}

namespace {

// Collects payload text and writes it with LF endings.
class Writer {
 public:
  Writer(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Internal, "cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back(name);
  }
  void json_doc(const std::string& name, json doc) {
    doc["config_hash"] = hash_;
    text(name, doc.dump(2) + "\n");
  }
  void pgm(const std::string& name, int w, int h, const std::vector<std::uint16_t>& px) {
    write_pgm16(dir_ / name, w, h, px, "config_hash " + hash_);
    files_.push_back(name);
  }
  std::string csv_header(const std::string& columns) const { return "# config_hash " + hash_ + "\n" + columns + "\n"; }
  const std::vector<std::string>& files() const { return files_; }
  const std::string& hash() const { return hash_; }

 private:
  fs::path dir_;
  std::string hash_;
  std::vector<std::string> files_;
};

struct CommandResult {
  int exit_code = kOk;
  std::vector<std::string> notes;
};

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  bool first = true;
  for (const std::string& c : cells) {
    if (!first) s += ',';
    s += c;
    first = false;
  }
  s += '\n';
  return s;
}

std::string d(double v) { return format_double(v); }

PeriodicOptions periodic_options(const RunConfig& cfg) {
  PeriodicOptions o;
  o.seed_density = static_cast<int>(cfg.integer("seed_density", o.seed_density));
  o.quasi_random = static_cast<int>(cfg.integer("quasi_random", o.quasi_random));
  o.real_density = static_cast<int>(cfg.integer("real_density", o.real_density));
  o.tol = cfg.number("tol", o.tol);
  o.newton_max = static_cast<int>(cfg.integer("newton_max", o.newton_max));
  o.dedup_eps = cfg.number("dedup_eps", o.dedup_eps);
  o.margin = cfg.number("margin", o.margin);
  o.tol_im = cfg.number("tol_im", o.tol_im);
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  return o;
}

IntersectionOptions intersection_options(const RunConfig& cfg) {
  IntersectionOptions o;
  o.s_inner = cfg.number("s_inner", o.s_inner);
  o.s_fundamental_domains = static_cast<int>(cfg.integer("s_fundamental_domains", o.s_fundamental_domains));
  o.t_inner = cfg.number("t_inner", o.t_inner);
  o.t_fundamental_domains = static_cast<int>(cfg.integer("t_fundamental_domains", o.t_fundamental_domains));
  o.radial_samples = static_cast<int>(cfg.integer("radial", o.radial_samples));
  o.angular_samples = static_cast<int>(cfg.integer("angular", o.angular_samples));
  o.tol = cfg.number("intersection_tol", o.tol);
  o.newton_max = static_cast<int>(cfg.integer("intersection_newton_max", o.newton_max));
  o.transversality_threshold = cfg.number("transversality_threshold", o.transversality_threshold);
  o.tol_im = cfg.number("intersection_tol_im", o.tol_im);
  o.bounded_horizon = static_cast<int>(cfg.integer("bounded_horizon", o.bounded_horizon));
  o.threads = cfg.threads;
  return o;
}

ChartOptions chart_options(const RunConfig& cfg) {
  ChartOptions o;
  o.order = static_cast<int>(cfg.integer("order", o.order));
  o.target_residual = cfg.number("target_residual", o.target_residual);
  o.margin = cfg.number("margin", o.margin);
  return o;
}

std::string realness_label(const PeriodicOrbit& o) {
  if (!o.realness) return "NA";
  return o.realness->real ? "Real" : "NonReal";
}

json orbit_json(const PeriodicOrbit& o) {
  json pts = json::array();
  for (const Point2& p : o.points) pts.push_back(pnum(p));
  json j{{"period", o.period()},
         {"points", pts},
         {"residual", num(o.residual)},
         {"residual_extended", num(o.residual_extended)},
         {"lambda_s", cnum(o.lambda_s)},
         {"lambda_u", cnum(o.lambda_u)},
         {"log_abs_s", num(o.log_abs_s)},
         {"log_abs_u", num(o.log_abs_u)},
         {"class", to_string(o.cls)},
         {"realness", realness_label(o)}};
  if (o.realness) j["max_im"] = num(o.realness->max_im);
  return j;
}

json stats_json(const IntersectionStats& s) {
  return {{"seeds", s.seeds},
          {"converged", s.converged},
          {"trivial", s.trivial},
          {"duplicates", s.duplicates},
          {"rejected_unbounded", s.rejected_unbounded},
          {"s_max", num(s.s_max)},
          {"t_max", num(s.t_max)}};
}

std::string window_note(const ParamWindow& w) {
  return "window [" + d(w.u_min) + ", " + d(w.u_max) + "] x [" + d(w.v_min) + ", " + d(w.v_max) + "]";
}

json window_json(const ParamWindow& w) {
  return {{"u_min", num(w.u_min)}, {"u_max", num(w.u_max)}, {"v_min", num(w.v_min)},
          {"v_max", num(w.v_max)}, {"nx", w.nx},            {"ny", w.ny}};
}

// Shared by green-raster, mu-sample and the chart rasters.
void emit_raster(Writer& w, const std::string& stem, const RasterGrid& grid, bool mass_image, std::optional<double> vmax_cfg,
                 json extra) {
  const ParamWindow& win = grid.window;
  double vmax = 0.0;
  if (vmax_cfg) {
    vmax = *vmax_cfg;
  } else {
    for (const RasterCell& c : grid.cells) {
      const double v = mass_image ? c.mass.value_or(0.0) : (c.status == GreenStatus::Escaped ? c.value : 0.0);
      if (std::isfinite(v)) vmax = std::max(vmax, v);
    }
  }
  std::vector<std::uint16_t> px;
  px.reserve(grid.cells.size());
  std::string csv = w.csv_header("row,col,re_param,im_param,value,mass,status");
  for (int row = 0; row < win.ny; ++row)
    for (int col = 0; col < win.nx; ++col) {
      const RasterCell& c = grid.at(row, col);
      const double v = mass_image ? c.mass.value_or(0.0) : c.value;
      // Overflowed cells are far out in the escape region: saturate.
      px.push_back(!mass_image && c.status == GreenStatus::Overflow ? 65535 : scale_pixel(v, vmax));
      csv += csv_row({std::to_string(row), std::to_string(col), d(win.u(col)), d(win.v(row)), d(c.value),
                      c.mass ? d(*c.mass) : std::string(), to_string(c.status)});
    }
  w.pgm(stem + ".pgm", win.nx, win.ny, px);
  w.text(stem + ".csv", csv);
  json meta{{"version", kVersion},
            {"slice", grid.slice_label},
            {"side", grid.side == GreenSide::Plus ? "plus" : "minus"},
            {"window", window_json(win)},
            {"tol", num(grid.tol)},
            {"n_max", grid.n_max},
            {"vmax", num(vmax)},
            {"image", mass_image ? "mass" : "green"},
            {"pixel", "round(65535 * min(v / vmax, 1)), row 0 = v_max"},
            {"coordinates", "normal form (y, p(y) - delta x)"},
            {"total_mass", num(grid.total_mass())},
            {"counts",
             {{"Escaped", grid.count(GreenStatus::Escaped)},
              {"BoundedUpToN", grid.count(GreenStatus::BoundedUpToN)},
              {"Unresolved", grid.count(GreenStatus::Unresolved)},
              {"Overflow", grid.count(GreenStatus::Overflow)}}}};
  if (grid.affine) meta["affine"] = {{"base", pnum(grid.affine->base)}, {"e1", pnum(grid.affine->e1)}, {"e2", pnum(grid.affine->e2)}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  w.json_doc(stem + ".meta.json", meta);
}

CommandResult cmd_raster(const RunConfig& cfg, Writer& w, bool measure) {
  const ComposedMap map = cfg.map();
  std::string label;
  const AffineSlice slice = raster_slice(cfg, label);
  const ParamWindow win = raster_window(cfg);
  RasterOptions o;
  o.tol = cfg.number("tol", o.tol);
  o.n_max = static_cast<int>(cfg.integer("n_max", o.n_max));
  o.side = raster_side(cfg);
  o.threads = cfg.threads;
  o.precision = cfg.precision;
  RasterGrid grid = raster_green(map, slice, win, o);
  grid.slice_label = label;
  attach_masses(grid);
  // Green rasters use a fixed scale (default 1) so images are comparable;
  // mass images scale to their own maximum unless vmax is given.
  std::optional<double> vmax;
  if (cfg.has("vmax") || !measure) vmax = cfg.number("vmax", 1.0);
  emit_raster(w, measure ? "mu_sample" : "green_raster", grid, measure, vmax, json::object());

  CommandResult r;
  const double frac = static_cast<double>(grid.count(GreenStatus::Overflow)) / static_cast<double>(grid.cells.size());
  const double threshold = cfg.number("saturation_threshold", 0.5);
  r.notes.push_back(window_note(win));
  if (frac > threshold) {
    r.exit_code = kSaturated;
    r.notes.push_back("overflow fraction " + d(frac) + " exceeds " + d(threshold));
  }
  return r;
}

CommandResult cmd_periodic(const RunConfig& cfg, Writer& w) {
  const ComposedMap map = cfg.map();
  const int n = static_cast<int>(cfg.integer("n", 1));
  const PeriodicOptions o = periodic_options(cfg);
  const int rounds = static_cast<int>(cfg.integer("escalation_rounds", 4));
  const PeriodicSearch s = find_periodic_orbits_escalating(map, n, o, rounds);
  const bool extended = cfg.precision == Precision::Extended;

  std::string csv = w.csv_header(
      "period,index,point_index,re_x,im_x,re_y,im_y,residual,re_lambda_s,im_lambda_s,re_lambda_u,im_lambda_u,class,"
      "realness,max_im");
  for (std::size_t i = 0; i < s.orbits.size(); ++i) {
    const PeriodicOrbit& orb = s.orbits[i];
    for (std::size_t k = 0; k < orb.points.size(); ++k) {
      const Point2& p = orb.points[k];
      csv += csv_row({std::to_string(orb.period()), std::to_string(i), std::to_string(k), d(p.x.real()), d(p.x.imag()),
                      d(p.y.real()), d(p.y.imag()), d(extended ? orb.residual_extended : orb.residual),
                      d(orb.lambda_s.real()), d(orb.lambda_s.imag()), d(orb.lambda_u.real()), d(orb.lambda_u.imag()),
                      to_string(orb.cls), realness_label(orb), orb.realness ? d(orb.realness->max_im) : std::string()});
    }
  }
  w.text("periodic.csv", csv);

  const CompletenessAudit a = completeness_audit(map, n, s.orbits);
  json flags = json::array();
  for (std::size_t f : a.multiplicity_flags) flags.push_back(f);
  json audit{{"version", kVersion},
             {"n", n},
             {"expected", a.expected},
             {"found", a.found_count},
             {"missing", a.missing},
             {"consistent", a.consistent},
             {"multiplicity_flags", flags},
             {"real_solutions", map.is_real() ? json(real_solution_count(s.orbits, n)) : json(nullptr)},
             {"orbits", s.orbits.size()},
             {"residual_column", extended ? "extended" : "double"},
             {"coordinates", "normal form (y, p(y) - delta x)"},
             {"stats",
              {{"seeds", s.stats.seeds},
               {"converged", s.stats.converged},
               {"nonconverged", s.stats.nonconverged},
               {"near_collisions", s.stats.near_collisions}}},
             {"warnings", s.warnings}};
  w.json_doc("periodic_audit.json", audit);
  CommandResult r;
  if (a.missing > 0) r.notes.push_back("audit shortfall: " + std::to_string(a.missing) + " solutions missing");
  return r;
}

CommandResult cmd_entropy(const RunConfig& cfg, Writer& w) {
  const ComposedMap map = cfg.map();
  ReportOptions o;
  o.ensemble.periodic = periodic_options(cfg);
  o.ensemble.escalation_rounds = static_cast<int>(cfg.integer("escalation_rounds", 4));
  o.homoclinic_scan = cfg.flag("homoclinic_scan", false);
  o.chart = chart_options(cfg);
  o.intersections = intersection_options(cfg);
  const int n_max = static_cast<int>(cfg.integer("N_max", 3));
  const MaxEntropyReport rep = max_entropy_report(map, n_max, o);

  w.text("entropy_report.txt", "config_hash " + w.hash() + "\n" + render_text(map, rep));

  json growth = json::array();
  for (const GrowthRow& g : rep.growth_table)
    growth.push_back({{"n", g.n}, {"complex_count", g.complex_count}, {"real_count", g.real_count}, {"expected", g.expected}});
  json orbits = json::array();
  for (const auto& row : rep.orbits_by_period)
    for (const PeriodicOrbit& orb : row) orbits.push_back(orbit_json(orb));
  json sinks = json::array();
  for (const PeriodicOrbit& s : rep.sinks_found) sinks.push_back(orbit_json(s));
  json doc{{"version", kVersion},
           {"map", map_to_json(map)},
           {"degree", map.degree()},
           {"jac_det", cnum(map.jac_det())},
           {"N_max", rep.n_max},
           {"all_periodic_real", rep.all_periodic_real},
           {"nonreal_witness", rep.nonreal_witness ? orbit_json(*rep.nonreal_witness) : json(nullptr)},
           {"sinks_found", sinks},
           {"homoclinic", to_string(rep.homoclinic)},
           {"growth_table", growth},
           {"verdict", to_string(rep.verdict)},
           {"reasons", rep.reasons},
           {"label", rep.verdict == EntropyVerdict::ConsistentWithMaxEntropy
                         ? "up to period " + std::to_string(rep.n_max) + ", not a proof"
                         : "topological entropy of the real map is strictly less than log d"},
           {"orbits", orbits}};
  if (rep.homoclinic != HomoclinicRealness::NotScanned) {
    json h{{"count", rep.homoclinic_count}, {"stats", stats_json(rep.homoclinic_stats)}};
    if (rep.homoclinic_saddle) h["saddle"] = orbit_json(*rep.homoclinic_saddle);
    if (rep.homoclinic_witness)
      h["witness"] = {{"point", pnum(rep.homoclinic_witness->point)},
                      {"s", cnum(rep.homoclinic_witness->s)},
                      {"t", cnum(rep.homoclinic_witness->t)},
                      {"max_im", num(rep.homoclinic_witness->max_im)}};
    doc["homoclinic_scan"] = h;
  }
  if (rep.exponents) {
    doc["estimates"] = {{"chi_u", num(rep.exponents->chi_u)},
                        {"chi_s", num(rep.exponents->chi_s)},
                        {"log_d", num(rep.exponents->log_degree)},
                        {"sum_identity_error", num(rep.exponents->sum_identity_error)},
                        {"weights", "uniform over saddle points, heuristic"}};
    if (rep.dimension)
      doc["estimates"]["young_dimension"] = {{"value", num(rep.dimension->hd_unstable_slice)},
                                             {"dissipative", rep.dimension->dissipative},
                                             {"below_one", rep.dimension->dissipative_check}};
  }
  w.json_doc("entropy_report.json", doc);
  CommandResult r;
  r.notes.push_back(std::string("verdict ") + to_string(rep.verdict));
  return r;
}

PeriodicOrbit select_saddle(const RunConfig& cfg, const ComposedMap& map) {
  const int period = static_cast<int>(cfg.integer("period", 1));
  const PeriodicSearch s =
      find_periodic_orbits_escalating(map, period, periodic_options(cfg), static_cast<int>(cfg.integer("escalation_rounds", 4)));
  std::vector<PeriodicOrbit> saddles;
  for (const PeriodicOrbit& o : s.orbits)
    if (o.period() == period && o.cls == OrbitClass::Saddle) saddles.push_back(o);
  if (saddles.empty()) throw Error(ErrorKind::NotASaddle, "no saddle orbit of period " + std::to_string(period));
  if (cfg.has("saddle_index")) {
    const long long i = cfg.integer("saddle_index", 0);
    if (i >= static_cast<long long>(saddles.size()))
      config_error("saddle_index: only " + std::to_string(saddles.size()) + " saddles of period " + std::to_string(period));
    return saddles[static_cast<std::size_t>(i)];
  }
  std::vector<std::vector<PeriodicOrbit>> rows{saddles};
  std::optional<PeriodicOrbit> best = weakest_saddle(rows, map.is_real());
  if (!best) best = weakest_saddle(rows, false);
  return *best;
}

std::string chart_dump(const Writer& w, const ManifoldChart& c, double residual) {
  std::string s = "# config_hash " + w.hash() + "\n";
  s += "# side " + std::string(to_string(c.side)) + "\n";
  s += "# period " + std::to_string(c.period()) + " base_index " + std::to_string(c.base_index) + "\n";
  const Point2 b = c.base_point();
  s += "# base " + d(b.x.real()) + " " + d(b.x.imag()) + " " + d(b.y.real()) + " " + d(b.y.imag()) + "\n";
  s += "# lambda " + d(c.lambda.real()) + " " + d(c.lambda.imag()) + "\n";
  s += "# other_eigenvalue " + d(c.other_eigenvalue.real()) + " " + d(c.other_eigenvalue.imag()) + "\n";
  s += "# swapped " + std::string(c.swapped ? "true" : "false") + "\n";
  s += "# r0 " + d(c.r0) + "\n";
  s += "# tol_chart " + d(c.tol_chart) + "\n";
  s += "# residual " + d(residual) + "\n";
  s += "k,re_x,im_x,re_y,im_y\n";
  for (std::size_t k = 0; k < c.coeffs.size(); ++k) {
    const Point2& p = c.coeffs[k];
    s += csv_row({std::to_string(k), d(p.x.real()), d(p.x.imag()), d(p.y.real()), d(p.y.imag())});
  }
  return s;
}

CommandResult cmd_manifold(const RunConfig& cfg, Writer& w) {
  const ComposedMap map = cfg.map();
  const PeriodicOrbit saddle = select_saddle(cfg, map);
  const ChartOptions co = chart_options(cfg);
  const int base_index = static_cast<int>(cfg.integer("base_index", 0));
  if (base_index >= saddle.period()) config_error("base_index: must be below the period");
  const int resolution = static_cast<int>(cfg.integer("resolution", 64));
  RasterOptions ro;
  ro.tol = cfg.number("raster_tol", ro.tol);
  ro.n_max = static_cast<int>(cfg.integer("n_max", ro.n_max));
  ro.threads = cfg.threads;
  ro.precision = cfg.precision;
  CommandResult r;
  for (ChartSide side : {ChartSide::Unstable, ChartSide::Stable}) {
    const ManifoldChart chart = linearize(map, saddle, side, base_index, co);
    const double residual = chart_residual(chart, chart.r0, 257);
    const std::string stem = side == ChartSide::Unstable ? "chart_unstable" : "chart_stable";
    w.text(stem + ".csv", chart_dump(w, chart, residual));
    const double hw = cfg.has("half_width") ? cfg.number("half_width", 1.0) : chart.r0 * std::abs(chart.lambda);
    RasterGrid grid = green_on_chart(map, chart, hw, resolution, ro);
    emit_raster(w, stem + "_raster", grid, false, std::nullopt, {{"chart_residual", num(residual)}});
    r.notes.push_back(stem + " residual " + d(residual));
  }
  return r;
}

CommandResult cmd_homoclinic(const RunConfig& cfg, Writer& w) {
  const ComposedMap map = cfg.map();
  const PeriodicOrbit saddle = select_saddle(cfg, map);
  const ChartOptions co = chart_options(cfg);
  const int base_index = static_cast<int>(cfg.integer("base_index", 0));
  if (base_index >= saddle.period()) config_error("base_index: must be below the period");
  const ManifoldChart u = linearize(map, saddle, ChartSide::Unstable, base_index, co);
  const ManifoldChart s = linearize(map, saddle, ChartSide::Stable, base_index, co);
  const IntersectionSearch res = find_intersections(map, u, s, intersection_options(cfg));

  std::string csv = w.csv_header(
      "index,re_s,im_s,re_t,im_t,re_x,im_x,re_y,im_y,residual,transversal,min_singular,max_im,realness,bounded_forward,"
      "bounded_backward");
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    const HomoclinicPoint& h = res.points[i];
    csv += csv_row({std::to_string(i), d(h.s.real()), d(h.s.imag()), d(h.t.real()), d(h.t.imag()), d(h.point.x.real()),
                    d(h.point.x.imag()), d(h.point.y.real()), d(h.point.y.imag()), d(h.residual),
                    h.transversal ? "true" : "false", d(h.min_singular), d(h.max_im),
                    map.is_real() ? (h.real ? "Real" : "NonReal") : "NA", h.bounded_forward ? "true" : "false",
                    h.bounded_backward ? "true" : "false"});
  }
  w.text("homoclinic.csv", csv);
  std::size_t nonreal = 0;
  for (const HomoclinicPoint& h : res.points) nonreal += h.real ? 0 : 1;
  json doc{{"version", kVersion},
           {"result", res.points.empty() ? "NoneFound" : "Found"},
           {"count", res.points.size()},
           {"nonreal", map.is_real() ? json(nonreal) : json(nullptr)},
           {"saddle", orbit_json(saddle)},
           {"base_index", base_index},
           {"r0_unstable", num(u.r0)},
           {"r0_stable", num(s.r0)},
           {"stats", stats_json(res.stats)}};
  w.json_doc("homoclinic.json", doc);
  CommandResult r;
  r.notes.push_back(std::to_string(res.points.size()) + " intersections");
  return r;
}

CommandResult dispatch(const RunConfig& cfg, Writer& w) {
  if (cfg.command == "green-raster") return cmd_raster(cfg, w, false);
  if (cfg.command == "mu-sample") return cmd_raster(cfg, w, true);
  if (cfg.command == "periodic") return cmd_periodic(cfg, w);
  if (cfg.command == "entropy-report") return cmd_entropy(cfg, w);
  if (cfg.command == "manifold") return cmd_manifold(cfg, w);
  if (cfg.command == "homoclinic") return cmd_homoclinic(cfg, w);
  config_error("unknown command '" + cfg.command + "'");
}

}  // namespace

int run(const RunConfig& cfg, const fs::path& out_dir, const RunOptions& opts, std::ostream& log) {
  const std::string hash = cfg.hash();
  try {
    fs::create_directories(out_dir);
    if (opts.use_cache) {
      const CacheLookup hit = cache_lookup(out_dir, hash);
      if (hit.state == CacheState::Hit) {
        log << "cache hit " << hash << "\n";
        return hit.envelope.exit_code;
      }
      if (hit.state == CacheState::Corrupt) log << "warning: cache entry " << hash << " ignored (" << hit.problem << "), recomputing\n";
      else log << "cache miss " << hash << "\n";
    }
    const auto t0 = std::chrono::steady_clock::now();
    Writer w(out_dir, hash);
    const CommandResult res = dispatch(cfg, w);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const std::string& n : res.notes) log << n << "\n";

    ResultEnvelope env;
    env.config_hash = hash;
    env.version = kVersion;
    env.wall_clock = elapsed;
    env.command = cfg.command;
    env.exit_code = res.exit_code;
    env.notes = res.notes;
    env.notes.push_back(std::string("precision ") + (cfg.precision == Precision::Extended ? "extended" : "double"));
    env.notes.push_back("seed " + std::to_string(cfg.seed));
    for (const std::string& f : w.files())
      env.payload.push_back({f, file_checksum(out_dir / f), fs::file_size(out_dir / f)});
    if (opts.use_cache) cache_store(out_dir, env);
    return res.exit_code;
  } catch (const Error& e) {
    log << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace henon::io
