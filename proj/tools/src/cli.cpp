#include "cli.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace dcmd::app {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::Int: return "INT";
    case KeyType::UInt: return "UINT";
    case KeyType::Double: return "FLOAT";
    case KeyType::Bool: return "BOOL";
    case KeyType::String: return "TEXT";
    case KeyType::IntList: return "INT,...";
  }
  return "TEXT";
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose-based video anomaly detection with dual-conditioned motion diffusion", "dcmd"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.get_formatter()->column_width(42);

  std::string preset_name = "full", config_path;
  app.add_option("--preset", preset_name, "Defaults to start from: full | desk")
      ->capture_default_str();
  app.add_option("--config", config_path, "JSON config file; flags override its keys");

  // Every config key doubles as a flag. Help shows the full-preset default.
  const RunConfig defaults = preset("full");
  std::map<std::string, std::string> flag_values;
  for (const auto& key : config_keys()) {
    auto* opt = app.add_option("--" + key.name, flag_values[key.name], key.help);
    opt->default_str(key.get(defaults))->group("Config keys")->type_name(type_name(key.type));
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  bool force = false;
  std::string out_dir, data, labels, checkpoint, resume_path, scores;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic pose dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_flag("--force", force, "Allow a non-empty output directory");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--resume", resume_path, "Checkpoint to continue");
  train->add_flag("--force", force, "Allow a non-empty output directory");

  auto* score = app.add_subcommand("score", "Score clips with a trained model");
  score->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  score->add_option("--out", out_dir, "Output directory")->required();
  score->add_flag("--force", force, "Allow a non-empty output directory");

  auto* eval = app.add_subcommand("eval", "Frame-level ROC-AUC of a score file");
  eval->add_option("--scores", scores, "Score CSV")->required();

  auto* plot = app.add_subcommand("plot", "Plot score curves");
  plot->add_option("--scores", scores, "Score CSV")->required();
  plot->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    RunConfig cfg = preset(preset_name);
    if (!config_path.empty()) apply_json(cfg, read_text(config_path));
    for (const auto& key : config_keys())
      if (app.get_option("--" + key.name)->count() > 0)
        apply_value(cfg, key.name, flag_values[key.name]);
    cfg.finalize();
    data = cfg.data;
    labels = cfg.labels;

    if (synth->parsed()) {
      cmd_synth(cfg, out_dir, force, out);
    } else if (train->parsed()) {
      if (data.empty()) throw UsageError("train needs --data");
      cmd_train(cfg, data, out_dir, opt_path(resume_path), force, out);
    } else if (score->parsed()) {
      if (data.empty()) throw UsageError("score needs --data");
      cmd_score(cfg, checkpoint, data, out_dir, opt_path(labels), force, out);
    } else if (eval->parsed()) {
      out << cmd_eval(cfg, scores, opt_path(labels)) << '\n';
    } else if (plot->parsed()) {
      for (const auto& p : cmd_plot(scores, out_dir, opt_path(labels))) out << p.string() << '\n';
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace dcmd::app
