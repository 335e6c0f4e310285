#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "henon/extended.hpp"
#include "henon/map_core.hpp"

namespace henon::io {

extern const char* const kVersion;

enum ExitCode : int { kOk = 0, kUsage = 2, kSaturated = 3, kInternal = 4 };

// Maps an error kind to the process exit code.
int exit_code_for(ErrorKind kind);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// %.17g with '.' as the decimal separator regardless of locale.
std::string format_double(double v);

// Numbers in configs are decimal strings; plain JSON numbers are accepted too.
double parse_number(const nlohmann::json& j, std::string_view what);
long long parse_integer(const nlohmann::json& j, std::string_view what);
Complex parse_complex(const nlohmann::json& j, std::string_view what);

// {"classical": {"a": "1.4", "b": "0.3"}} or
// {"factors": [{"p_coeffs": [["re", "im"], ...], "delta": ["re", "im"]}, ...]}
ComposedMap parse_map(const nlohmann::json& j);
nlohmann::json map_to_json(const ComposedMap& map);

struct RunConfig {
  std::string command;
  // Config document with map and command parameters.
  nlohmann::json doc;
  Precision precision = Precision::Double;
  std::uint64_t seed = 0;
  int threads = 1;

  ComposedMap map() const { return parse_map(doc.at("map")); }

  // Canonical form that determines the outputs: doc + command + precision +
  // seed. Thread count is left out since results do not depend on it.
  nlohmann::json canonical() const;
  std::string hash() const;

  bool has(const char* key) const { return doc.contains(key); }
  double number(const char* key, double fallback) const;
  long long integer(const char* key, long long fallback) const;
  bool flag(const char* key, bool fallback) const;
  std::string text(const char* key, const std::string& fallback) const;
};

// Throws Error(Config) on schema problems.
RunConfig make_config(std::string command, nlohmann::json doc);
RunConfig load_config(std::string command, const std::filesystem::path& path);

void validate(const RunConfig& cfg);

// Writes a 16-bit big-endian binary PGM (maxval 65535).
void write_pgm16(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& pixels,
                 const std::string& comment);

// round(65535 * min(v / vmax, 1)) for v >= 0; negative or non-finite -> 0.
std::uint16_t scale_pixel(double v, double vmax);

struct PayloadFile {
  std::string name;
  std::uint64_t checksum = 0;
  std::uintmax_t bytes = 0;
};

struct ResultEnvelope {
  std::string config_hash;
  std::string version;
  double wall_clock = 0.0;
  std::string command;
  int exit_code = 0;
  std::vector<PayloadFile> payload;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const ResultEnvelope& e);
ResultEnvelope envelope_from_json(const nlohmann::json& j);

std::uint64_t file_checksum(const std::filesystem::path& path);

enum class CacheState { Hit, Miss, Corrupt };

struct CacheLookup {
  CacheState state = CacheState::Miss;
  ResultEnvelope envelope;
  std::string problem;
};

std::filesystem::path cache_path(const std::filesystem::path& out_dir, const std::string& hash);

// Hit only if the envelope parses, matches the hash, and every payload file
// is present with the recorded checksum.
CacheLookup cache_lookup(const std::filesystem::path& out_dir, const std::string& hash);
void cache_store(const std::filesystem::path& out_dir, const ResultEnvelope& envelope);

struct RunOptions {
  bool use_cache = true;
};

// Runs one subcommand, writing payloads into out_dir. Returns the exit code;
// diagnostics go to `log`.
int run(const RunConfig& cfg, const std::filesystem::path& out_dir, const RunOptions& opts, std::ostream& log);

const std::vector<std::string>& command_names();

}  // namespace henon::io
