#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pqnet/cli/commands.hpp"

namespace pqnet::cli {

/// Parses arguments, runs one command and maps failures to exit codes:
/// 0 success, 2 bad input, 3 missing upstream stage, 4 anything else.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Part-sequence shape generation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool force = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key=value config file with [sections]");
  auto* seed_opt = app.add_option("--seed", seed, "run seed (overrides run.seed)");
  app.add_flag("--force", force, "rewrite existing outputs");
  app.add_option("--out", out_dir, "run directory (overrides run.dir)");
  app.add_option("--set", sets, "override a config key, e.g. --set seq2seq.epochs=10");

  auto* prepare = app.add_subcommand("prepare", "build the dataset directory");
  std::string stage;
  auto* train = app.add_subcommand("train", "train one stage");
  train->add_option("stage", stage, "partae | seq2seq | gan | svr | completion | denoise")->required();
  int count = 0;
  auto* generate = app.add_subcommand("generate", "sample new shapes");
  generate->add_option("--count", count, "number of shapes (overrides generate.count)");
  std::string from, to;
  int steps = 5;
  auto* interp = app.add_subcommand("interpolate", "decode along a latent segment between two shapes");
  interp->add_option("--from", from, "start shape id")->required();
  interp->add_option("--to", to, "end shape id")->required();
  interp->add_option("--steps", steps, "number of decoded shapes, endpoints included");
  std::string shape_id;
  std::vector<int> remove;
  auto* complete = app.add_subcommand("complete", "complete a shape with parts removed");
  complete->add_option("--shape", shape_id, "dataset shape id")->required();
  complete->add_option("--remove", remove, "part indices to drop")->delimiter(',');
  auto* denoise = app.add_subcommand("denoise", "restore the part order of a scrambled shape");
  denoise->add_option("--shape", shape_id, "dataset shape id")->required();
  std::string image;
  auto* svr = app.add_subcommand("svr-infer", "reconstruct a shape from one image");
  svr->add_option("--image", image, "PGM depth map or PPM colour image")->required();
  std::string gen, ref = "test";
  auto* eval = app.add_subcommand("eval", "set-level metrics of generated shapes against a split");
  eval->add_option("--gen", gen, "directory of OBJ files, or split:<name>")->required();
  eval->add_option("--ref", ref, "reference split");
  bool recon = false;
  auto* export_mesh = app.add_subcommand("export-mesh", "write a dataset shape as a part-grouped OBJ");
  export_mesh->add_option("--shape", shape_id, "dataset shape id")->required();
  export_mesh->add_flag("--recon", recon, "export the autoencoder reconstruction instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    std::map<std::string, std::string> flags;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + s + "'");
      flags[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (*seed_opt) flags["run.seed"] = std::to_string(seed);
    if (!out_dir.empty()) flags["run.dir"] = out_dir;

    Context ctx;
    ctx.cfg = resolve_config(config_path, flags);
    ctx.force = force;
    ctx.out = &out;
    const RunLock lock(ctx.cfg.run_dir);
    ctx.manifest.config = snapshot(ctx.cfg);
    ctx.manifest.started = utc_timestamp();

    std::string name;
    if (*prepare) {
      name = "prepare";
      cmd_prepare(ctx);
    } else if (*train) {
      name = "train_" + stage;
      cmd_train(ctx, stage);
    } else if (*generate) {
      name = "generate";
      cmd_generate(ctx, count > 0 ? count : ctx.cfg.count);
    } else if (*interp) {
      name = "interpolate";
      cmd_interpolate(ctx, from, to, steps);
    } else if (*complete) {
      name = "complete";
      cmd_complete(ctx, shape_id, remove);
    } else if (*denoise) {
      name = "denoise";
      cmd_denoise(ctx, shape_id);
    } else if (*svr) {
      name = "svr-infer";
      cmd_svr_infer(ctx, image);
    } else if (*eval) {
      name = "eval";
      cmd_eval(ctx, gen, ref);
    } else {
      name = "export-mesh";
      cmd_export_mesh(ctx, shape_id, recon);
    }
    ctx.manifest.command = name;
    ctx.finish(name);
    return kExitOk;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const MissingDependency& e) {
    err << "error: missing dependency '" << e.stage() << "': " << e.what() << "\n";
    return kExitDependency;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace pqnet::cli
