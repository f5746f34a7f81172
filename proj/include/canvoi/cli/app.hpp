#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "canvoi/cli/commands.hpp"

namespace canvoi::cli {

using CommandFn = std::function<int(const CommonOptions&, const json&)>;

inline const std::vector<std::pair<std::string, std::string>>& command_list() {
  static const std::vector<std::pair<std::string, std::string>> list = {
      {"synth", "generate a synthetic slide cohort and its manifest"},
      {"tile", "tissue statistics for every manifest slide"},
      {"pretrain", "self-distillation pre-training of the tile encoder"},
      {"embed", "encode every tissue tile into the embedding store"},
      {"mil", "leave-one-group-out plan and one AB-MIL model per fold"},
      {"eval", "ensemble scoring and merged-cohort metrics"},
      {"flops", "compute trade-off table over encoder geometries"},
      {"sweep", "label-reduction curve"},
  };
  return list;
}

inline CommandFn command_fn(const std::string& name) {
  static const std::map<std::string, CommandFn> fns = {
      {"synth", cmd_synth}, {"tile", cmd_tile}, {"pretrain", cmd_pretrain}, {"embed", cmd_embed},
      {"mil", cmd_mil},     {"eval", cmd_eval}, {"flops", cmd_flops},       {"sweep", cmd_sweep},
  };
  return fns.at(name);
}

// One line for the diagnostic stream: canvoi: error=<kind> reason="...".
inline std::string error_line(const std::string& kind, const std::string& reason) {
  std::string r;
  for (char c : reason) {
    if (c == '"' || c == '\\') r += '\\';
    r += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return "canvoi: error=" + kind + " reason=\"" + r + "\"\n";
}

// Runs one subcommand; args exclude the program name. Returns the exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"canvoi: tile encoder, slide classifier and compute accounting"};
  app.require_subcommand(1, 1);
  CommonOptions opt;
  std::string precision = "f32";
  std::uint64_t seed = 0;
  for (const auto& [name, help] : command_list()) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--seed", seed, "seed overriding the config");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what());
    return 1;
  }
  auto* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  opt.precision = precision == "f64" ? Precision::f64 : Precision::f32;
  if (sub->count("--seed")) opt.seed = seed;
  try {
    const auto j = load_config_json(opt.config_path);
    return command_fn(opt.command)(opt, j);
  } catch (const canvoi::Error& e) {
    err << error_line(kind_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << error_line("config", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << error_line("data", e.what());
    return 2;
  } catch (const std::exception& e) {
    err << error_line("data", e.what());
    return 2;
  }
}

}  // namespace canvoi::cli
