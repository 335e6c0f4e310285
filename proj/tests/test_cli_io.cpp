#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "henon/cli_io.hpp"

using namespace henon;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("henon_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct CliResult {
  int code = -1;
  std::string log;
};

CliResult run_cli(const std::string& command, const json& config, const fs::path& dir, const std::string& extra = "") {
  const fs::path cfg = dir / (command + ".json");
  write_file(cfg, config.dump(2));
  const fs::path log = dir / "log.txt";
  const std::string cmd = std::string(HENON_CLI_PATH) + " " + command + " --config " + cfg.string() + " --out " +
                          (dir / "out").string() + " " + extra + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const json kClassical = {{"classical", {{"a", "1.4"}, {"b", "0.3"}}}};

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("number parsing") {
  CHECK(io::parse_number(json("1.4"), "x") == 1.4);
  CHECK(io::parse_number(json("-2.5e-3"), "x") == -2.5e-3);
  CHECK(io::parse_number(json("+3"), "x") == 3.0);
  CHECK(io::parse_number(json(0.25), "x") == 0.25);
  CHECK(io::parse_number(json("0.1"), "x") == 0.1);
  for (const char* bad : {"1,4", "abc", "", "1.4x", "nan", "inf"}) CHECK_THROWS_AS(io::parse_number(json(bad), "x"), Error);
  CHECK(io::parse_integer(json("12"), "n") == 12);
  CHECK_THROWS_AS(io::parse_integer(json("1.5"), "n"), Error);
  CHECK(io::parse_complex(json::array({"1", "-2"}), "z") == Complex(1.0, -2.0));
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::parse_number(json(io::format_double(1.0 / 3.0)), "x") == 1.0 / 3.0);
}

TEST_CASE("map documents round-trip") {
  const ComposedMap a = io::parse_map(kClassical);
  CHECK(a.classical());
  CHECK(io::parse_map(io::map_to_json(a)).hash() == a.hash());
  const json factors = json::parse(R"({"factors": [
    {"p_coeffs": [["0.1", "0.2"], ["0", "0"], ["1", "0"]], "delta": ["0.3", "0"]},
    {"p_coeffs": [["0", "0"], ["0", "0"], ["0", "0"], ["2", "0"]], "delta": ["0", "1"]}]})");
  const ComposedMap b = io::parse_map(factors);
  CHECK(b.degree() == 6);
  CHECK(io::parse_map(io::map_to_json(b)).hash() == b.hash());
  CHECK_THROWS_AS(io::parse_map(json{{"classical", {{"a", "1.4"}}}}), Error);
  CHECK_THROWS_AS(io::parse_map(json{{"classical", {{"a", "1.4"}, {"b", "0"}}}}), Error);
  CHECK_THROWS_AS(io::parse_map(json::parse(R"({"factors": [{"p_coeffs": [["1", "0"]], "delta": ["1", "0"]}]})")), Error);
}

TEST_CASE("config validation and hashing") {
  const io::RunConfig c = io::make_config("periodic", {{"map", kClassical}, {"n", "3"}});
  CHECK(c.hash() == io::make_config("periodic", c.doc).hash());
  CHECK(c.hash() != io::make_config("periodic", {{"map", kClassical}, {"n", "4"}}).hash());
  CHECK(c.hash() != io::make_config("periodic", {{"map", kClassical}, {"n", "3"}, {"seed", "1"}}).hash());
  // The canonical form parses back to the same configuration.
  const json canon = json::parse(c.canonical().dump());
  CHECK(io::make_config(canon.at("command"), canon.at("config")).hash() == c.hash());
  auto kind_of = [](const std::string& cmd, const json& doc) {
    try {
      io::make_config(cmd, doc);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Internal;
  };
  CHECK(kind_of("periodic", {{"map", kClassical}, {"n", "3"}, {"typo", "1"}}) == ErrorKind::Config);
  CHECK(kind_of("periodic", {{"map", kClassical}, {"n", "3"}, {"tol", "0"}}) == ErrorKind::Config);
  CHECK(kind_of("green-raster", {{"map", kClassical}, {"nx", "1"}}) == ErrorKind::Config);
  CHECK(kind_of("green-raster", {{"map", kClassical}, {"tol", "-1"}}) == ErrorKind::Config);
  CHECK(kind_of("nope", {{"map", kClassical}}) == ErrorKind::Config);
  CHECK(kind_of("periodic", {{"n", "3"}}) == ErrorKind::Config);
  CHECK(io::exit_code_for(ErrorKind::Config) == 2);
  CHECK(io::exit_code_for(ErrorKind::NotRealMap) == 2);
  CHECK(io::exit_code_for(ErrorKind::Overflow) == 3);
  CHECK(io::exit_code_for(ErrorKind::Internal) == 4);
}

TEST_CASE("pgm writer") {
  const fs::path dir = scratch("pgm");
  io::write_pgm16(dir / "a.pgm", 3, 2, {0, 1, 256, 65535, 2, 3}, "config_hash abc");
  const std::string s = slurp(dir / "a.pgm");
  const std::string header = "P5\n# config_hash abc\n3 2\n65535\n";
  REQUIRE(s.size() == header.size() + 12);
  CHECK(s.substr(0, header.size()) == header);
  const auto* px = reinterpret_cast<const unsigned char*>(s.data() + header.size());
  CHECK(px[2] == 0x00);
  CHECK(px[3] == 0x01);
  CHECK(px[4] == 0x01);
  CHECK(px[5] == 0x00);
  CHECK(px[6] == 0xff);
  CHECK(px[7] == 0xff);
  CHECK(io::scale_pixel(0.5, 1.0) == 32768);
  CHECK(io::scale_pixel(2.0, 1.0) == 65535);
  CHECK(io::scale_pixel(-1.0, 1.0) == 0);
}

TEST_CASE("envelope round-trip") {
  io::ResultEnvelope e{"00ff", "0.1.0", 0.5, "periodic", 0, {{"periodic.csv", 42, 100}}, {"note"}};
  const io::ResultEnvelope r = io::envelope_from_json(io::to_json(e));
  CHECK(r.config_hash == e.config_hash);
  CHECK(r.exit_code == 0);
  REQUIRE(r.payload.size() == 1);
  CHECK(r.payload[0].checksum == 42);
  CHECK(r.payload[0].bytes == 100);
}

TEST_CASE("periodic command output") {
  const fs::path dir = scratch("periodic");
  const CliResult r = run_cli("periodic", {{"map", kClassical}, {"n", "3"}}, dir, "--no-cache");
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(dir / "out" / "periodic.csv");
  CHECK(rows.size() == 8);
  int real = 0;
  for (const auto& row : rows) {
    REQUIRE(row.size() == 15);
    CHECK(std::stod(row[7]) < 1e-10);
    if (row[13] == "Real") ++real;
  }
  CHECK(real == 2);
  CHECK(slurp(dir / "out" / "periodic.csv").rfind("# config_hash ", 0) == 0);
  const json audit = json::parse(slurp(dir / "out" / "periodic_audit.json"));
  CHECK(audit.contains("config_hash"));

  const fs::path d1 = scratch("periodic1");
  CHECK(run_cli("periodic", {{"map", kClassical}, {"n", "1"}}, d1, "--no-cache").code == 0);
  CHECK(csv_rows(d1 / "out" / "periodic.csv").size() == 2);
}

TEST_CASE("outputs are byte-identical across runs") {
  const json cfg = {{"map", kClassical}, {"n", "4"}};
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(run_cli("periodic", cfg, a, "--no-cache").code == 0);
  REQUIRE(run_cli("periodic", cfg, b, "--no-cache --threads 3").code == 0);
  CHECK(slurp(a / "out" / "periodic.csv") == slurp(b / "out" / "periodic.csv"));
  CHECK(slurp(a / "out" / "periodic_audit.json") == slurp(b / "out" / "periodic_audit.json"));
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run_cli("periodic", {{"map", {{"classical", {{"a", "1,4"}, {"b", "0.3"}}}}}, {"n", "1"}}, dir).code == 2);
  const json complex_map =
      json::parse(R"({"factors": [{"p_coeffs": [["0.1", "0.2"], ["0", "0"], ["1", "0"]], "delta": ["0.3", "0"]}]})");
  const CliResult c = run_cli("entropy-report", {{"map", complex_map}, {"N_max", "2"}}, dir);
  CHECK(c.code == 2);
  CHECK(c.log.find("NotRealMap") != std::string::npos);
  // A window whose points are not representable saturates.
  json sat = json::parse(R"({
    "slice": {"type": "complex-line", "base": [["0", "0"], ["0", "0"]], "dir": [["0", "0"], ["1e300", "0"]]},
    "window": {"u_min": "2e8", "u_max": "3e8", "v_min": "0", "v_max": "1"}, "nx": "4", "ny": "4"})");
  sat["map"] = kClassical;
  CHECK(run_cli("green-raster", sat, dir).code == 3);
  CHECK(run_cli("periodic", {{"map", kClassical}}, dir).code == 2);
}

TEST_CASE("cache hit, miss and corruption") {
  const fs::path dir = scratch("cache");
  const json cfg = {{"map", kClassical}, {"n", "2"}};
  const CliResult first = run_cli("periodic", cfg, dir);
  REQUIRE(first.code == 0);
  CHECK(first.log.find("cache miss") != std::string::npos);
  const std::string payload = slurp(dir / "out" / "periodic.csv");
  const CliResult second = run_cli("periodic", cfg, dir);
  CHECK(second.log.find("cache hit") != std::string::npos);
  CHECK(slurp(dir / "out" / "periodic.csv") == payload);

  json changed = cfg;
  changed["tol"] = "1e-11";
  CHECK(run_cli("periodic", changed, dir).log.find("cache miss") != std::string::npos);

  const std::string hash = io::make_config("periodic", cfg).hash();
  write_file(io::cache_path(dir / "out", hash), "{ not json");
  const CliResult corrupt = run_cli("periodic", cfg, dir);
  CHECK(corrupt.code == 0);
  CHECK(corrupt.log.find("warning: cache entry") != std::string::npos);
  CHECK(slurp(dir / "out" / "periodic.csv") == payload);

  // A tampered payload file invalidates the entry too.
  write_file(dir / "out" / "periodic.csv", "tampered");
  const CliResult tampered = run_cli("periodic", cfg, dir);
  CHECK(tampered.log.find("warning: cache entry") != std::string::npos);
  CHECK(slurp(dir / "out" / "periodic.csv") == payload);
}

TEST_CASE("entropy reports") {
  const fs::path a = scratch("entropy_a");
  REQUIRE(run_cli("entropy-report", {{"map", kClassical}, {"N_max", "3"}}, a).code == 0);
  const json ra = json::parse(slurp(a / "out" / "entropy_report.json"));
  CHECK(ra.at("verdict") == "BelowMaxEntropy");
  CHECK(slurp(a / "out" / "entropy_report.txt").find("strictly less than log d") != std::string::npos);
  const fs::path b = scratch("entropy_b");
  REQUIRE(run_cli("entropy-report", {{"map", {{"classical", {{"a", "5.0"}, {"b", "0.3"}}}}}, {"N_max", "3"}}, b).code == 0);
  const json rb = json::parse(slurp(b / "out" / "entropy_report.json"));
  CHECK(rb.at("verdict") == "ConsistentWithMaxEntropy");
  CHECK(slurp(b / "out" / "entropy_report.txt").find("not a proof") != std::string::npos);
}

TEST_CASE("green rasters") {
  const fs::path far = scratch("raster_far");
  REQUIRE(run_cli("green-raster",
                  {{"map", kClassical}, {"window", {{"u_min", "50"}, {"u_max", "60"}, {"v_min", "50"}, {"v_max", "60"}}},
                   {"nx", "4"}, {"ny", "4"}},
                  far)
              .code == 0);
  const std::string pgm = slurp(far / "out" / "green_raster.pgm");
  const std::string tail = pgm.substr(pgm.size() - 32);
  CHECK(tail == std::string(32, '\xff'));

  const fs::path plane = scratch("raster_plane");
  REQUIRE(run_cli("green-raster", {{"map", kClassical}, {"nx", "200"}, {"ny", "200"}}, plane).code == 0);
  // The cell around the fixed point inside the attractor is bounded.
  const double c = 0.6313544770895048;
  for (const auto& row : csv_rows(plane / "out" / "green_raster.csv")) {
    if (std::abs(std::stod(row[2]) - c) < 0.01 && std::abs(std::stod(row[3]) - c) < 0.01) {
      CHECK(row[6] == "BoundedUpToN");
      CHECK(std::stod(row[4]) == 0.0);
    }
  }
  const fs::path mu = scratch("mu");
  json mu_cfg = json::parse(R"({
    "slice": {"type": "complex-line", "base": [["0.1", "0"], ["0", "0"]], "dir": [["0", "0"], ["1", "0"]]},
    "window": {"u_min": "-4", "u_max": "4", "v_min": "-4", "v_max": "4"}})");
  mu_cfg["map"] = kClassical;
  REQUIRE(run_cli("mu-sample", mu_cfg, mu).code == 0);
  const json meta = json::parse(slurp(mu / "out" / "mu_sample.meta.json"));
  CHECK(meta.contains("config_hash"));
}

TEST_CASE("manifold and homoclinic commands") {
  const fs::path m = scratch("manifold");
  REQUIRE(run_cli("manifold", {{"map", kClassical}, {"resolution", "16"}}, m).code == 0);
  const std::string dump = slurp(m / "out" / "chart_unstable.csv");
  const auto pos = dump.find("# residual ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(dump.substr(pos + 11)) < 1e-10);
  CHECK(fs::exists(m / "out" / "chart_stable_raster.pgm"));

  const fs::path h = scratch("homoclinic");
  REQUIRE(run_cli("homoclinic", {{"map", kClassical}}, h).code == 0);
  const json hj = json::parse(slurp(h / "out" / "homoclinic.json"));
  CHECK(hj.at("result") == "Found");
  bool nonreal = false;
  for (const auto& row : csv_rows(h / "out" / "homoclinic.csv"))
    for (const auto& cell : row) nonreal = nonreal || cell == "NonReal";
  CHECK(nonreal);

  const fs::path e = scratch("homoclinic_empty");
  REQUIRE(run_cli("homoclinic",
                  {{"map", kClassical}, {"s_fundamental_domains", "0"}, {"t_fundamental_domains", "0"}, {"s_inner", "1e-6"},
                   {"t_inner", "1e-6"}},
                  e)
              .code == 0);
  CHECK(json::parse(slurp(e / "out" / "homoclinic.json")).at("result") == "NoneFound");
}

}
