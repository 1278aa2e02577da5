#pragma once

#include <filesystem>
#include <iosfwd>

#include "config.hpp"
#include "json.hpp"

namespace popcode::cli {

// Each command writes its artifacts under `out`, prints progress to `log`
// and returns the report it also saved as JSON.
nlohmann::ordered_json cmd_gen_synth(const Config& c, const std::filesystem::path& out, std::ostream& log);
nlohmann::ordered_json cmd_train(const Config& c, const std::filesystem::path& out, std::ostream& log);
nlohmann::ordered_json cmd_eval(const Config& c, const std::filesystem::path& out, std::ostream& log);
nlohmann::ordered_json cmd_metrics(const Config& c, const std::filesystem::path& out, std::ostream& log);
nlohmann::ordered_json cmd_dump_code(const Config& c, const std::filesystem::path& out, std::ostream& log);
nlohmann::ordered_json cmd_bench(const Config& c, const std::filesystem::path& out, std::ostream& log);

// Full command line: parses flags, runs the command and maps failures to
// exit codes (0 ok, 2 config error, 3 runtime failure).
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace popcode::cli
