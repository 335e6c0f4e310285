#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "henon/cli_io.hpp"

int main(int argc, char** argv) {
  using namespace henon;
  CLI::App app{"Complex Henon map toolkit"};
  app.set_version_flag("--version", io::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int threads = 1;
  std::string precision;
  std::optional<std::uint64_t> seed;
  bool no_cache = false;

  const std::map<std::string, std::string> help{
      {"green-raster", "Raster of G+ or G- over an affine slice (PGM + CSV + metadata)"},
      {"periodic", "Periodic orbits of period dividing n, with completeness audit"},
      {"entropy-report", "Maximal-entropy checklist for a real map"},
      {"manifold", "Linearizing charts of W^u and W^s at a saddle, with Green rasters"},
      {"homoclinic", "Intersections of W^u and W^s at a saddle"},
      {"mu-sample", "Slice-measure raster from the discrete Laplacian of G"}};
  for (const std::string& name : io::command_names()) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
    sub->add_option("--precision", precision, "Arithmetic for Green values and residuals")
        ->check(CLI::IsMember({"double", "extended"}));
    sub->add_option("--seed", seed, "Seed for the quasi-random seed shift");
    sub->add_flag("--no-cache", no_cache, "Always recompute and do not record a cache entry");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : io::kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    io::RunConfig cfg = io::load_config(command, config_path);
    if (!precision.empty()) cfg.precision = precision == "extended" ? Precision::Extended : Precision::Double;
    if (seed) cfg.seed = *seed;
    cfg.threads = threads;
    return io::run(cfg, out_dir, {!no_cache}, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return io::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return io::kInternal;
  }
}
