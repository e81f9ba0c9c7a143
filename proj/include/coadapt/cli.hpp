#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coadapt/matrix.hpp"
#include "coadapt/qnetwork.hpp"

namespace coadapt {

// Flat, line-oriented configuration document: one `key = value` per line,
// full-line '#' comments, dotted keys for nesting, comma-separated lists.
// Keys are unique; getters record which keys were consumed so commands can
// reject typos via require_all_used().
class ConfigDoc {
  public:
    ConfigDoc() = default;
    static ConfigDoc parse_text(const std::string& text);   // ParseError names the line
    static ConfigDoc parse_file(const std::string& path);   // IoError when unreadable

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;   // missing -> ConfigError
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::uint64_t> get_uint_list(const std::string& key) const;

    // Overlay (insert or replace); used for preset seeding and sweep variants.
    void set(const std::string& key, const std::string& value);

    // Keys with a given prefix, in document order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    // `key = value` lines in document order; embedded in every output file.
    std::vector<std::string> provenance() const;

    // ConfigError naming any key never consumed by a getter.
    void require_all_used() const;

  private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

// Presets are config documents compiled into the binary, so list-presets is
// always in sync with what the commands accept.
struct Preset {
    std::string name;
    std::string kind;  // "gen" or "train"
    std::string description;
    std::string text;
};
const std::vector<Preset>& all_presets();
const Preset& find_preset(const std::string& name);  // ConfigError when unknown

struct CliOptions {
    std::string out_dir = ".";
    std::vector<std::uint64_t> seeds;  // overrides run.seeds when nonempty
    std::size_t jobs = 1;
};

// Commands throw on failure (ConfigError / NumericError / IoError); run_cli
// maps exceptions to exit codes.
void cmd_gen_data(const ConfigDoc& doc, const CliOptions& opts);
void cmd_train(const ConfigDoc& doc, const CliOptions& opts);
void cmd_analyze(const std::vector<std::string>& trace_paths, const ConfigDoc& doc,
                 const CliOptions& opts);
void cmd_stability(const ConfigDoc& doc, const CliOptions& opts);
void cmd_list_presets();

// Full command-line entry point: subcommand dispatch plus exit-code mapping
// (0 ok, 2 configuration, 3 numeric/divergence, 4 I/O).
int run_cli(int argc, const char* const* argv);

// Comma-separated numeric matrix with '#' comment lines; round-trips exactly.
void write_matrix_csv(const Matrix& m, const std::string& path,
                      const std::vector<std::string>& provenance = {});
Matrix read_matrix_csv(const std::string& path);

// Stderr logging gated by COADAPT_LOG (quiet | info | debug; default info).
enum class LogLevel { Quiet, Info, Debug };
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace coadapt
