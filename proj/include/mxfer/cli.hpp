#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mxfer/binding_io.hpp"
#include "mxfer/pipeline.hpp"

namespace mxfer {

namespace exit_code {
constexpr int ok = 0;
constexpr int parse = 2;
constexpr int binding = 3;
constexpr int transfer = 4;
}  // namespace exit_code

// Output path of variant i: PATH itself for a single variant, otherwise
// stem_v{i}.ext next to it.
inline std::string variant_path(const std::string& out, std::size_t index, std::size_t count) {
  if (count == 1) return out;
  const std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + "_v" + std::to_string(index) + p.extension().string())).string();
}

namespace detail {

// Failure tagged with the exit code of the stage that raised it.
struct StageError {
  int code;
  std::string message;
};

template <typename F>
auto stage(int code, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError{code, e.what()};
  }
}

struct CommonFlags {
  std::string source;
  std::vector<std::string> targets;
  std::string bindings;
  bool autobind = false;
  std::size_t chain_length = 4;
  std::size_t top_k = 3;
  std::string root_velocity = "auto";
};

inline void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--source", f.source, "Source BVH")->required();
  cmd->add_option("--target", f.targets, "Target example BVH (repeatable)")->required();
  auto* b = cmd->add_option("--bindings", f.bindings, "Binding JSON file");
  auto* a = cmd->add_flag("--autobind", f.autobind, "Bind joints by chain similarity");
  b->excludes(a);
  cmd->add_option("--chain-length", f.chain_length, "Chain length for --autobind")->capture_default_str();
  cmd->add_option("--top-k", f.top_k, "Chain pairs merged by --autobind")->capture_default_str();
  cmd->add_option("--root-velocity", f.root_velocity, "Bind the root velocity: on, off or auto")
      ->check(CLI::IsMember({"on", "off", "auto"}))
      ->capture_default_str();
}

struct TransferFlags {
  TransferConfig config;
  std::string feature_mode = "rotation6d";
  bool no_normalize = false;
  std::size_t keyframe_stride = 0;
  std::size_t variants = 1;
  std::string out;
};

inline void add_transfer_flags(CLI::App* cmd, TransferFlags& f) {
  cmd->add_option("--alpha", f.config.alpha, "Bound-channel weight")->capture_default_str();
  cmd->add_option("--patch", f.config.patch_size, "Patch size in frames")->capture_default_str();
  cmd->add_option("--step", f.config.step, "Patch stride")->capture_default_str();
  cmd->add_option("--iters", f.config.iterations, "Iterations per level")->capture_default_str();
  cmd->add_option("--pyramid", f.config.pyramid_levels, "Pyramid levels")->capture_default_str();
  cmd->add_option("--seed", f.config.seed, "Random seed")->capture_default_str();
  cmd->add_option("--feature-mode", f.feature_mode, "rotation6d, local_position or velocity")
      ->check(CLI::IsMember({"rotation6d", "local_position", "velocity"}))
      ->capture_default_str();
  cmd->add_flag("--no-normalize", f.no_normalize, "Match raw features instead of z-scores");
  cmd->add_option("--keyframe-stride", f.keyframe_stride, "Keep only every Nth source frame visible");
  cmd->add_option("--variants", f.variants, "Number of outputs, seeds seed..seed+N-1")->capture_default_str();
}

struct Inputs {
  Character source;
  std::vector<Character> targets;
  BindingSet bindings;
};

inline Inputs load_inputs(const CommonFlags& f) {
  Inputs in;
  stage(exit_code::parse, [&] {
    in.source = load_character(f.source);
    for (const auto& t : f.targets) in.targets.push_back(load_character(t));
    check_targets(in.targets);
  });
  stage(exit_code::binding, [&] {
    const Skeleton& tgt = in.targets[0].skeleton;
    const bool root = f.root_velocity == "on" ||
                      (f.root_velocity == "auto" && carries_locomotion(in.source.skeleton, in.source.motion) &&
                       carries_locomotion(tgt, in.targets[0].motion));
    if (!f.bindings.empty()) {
      in.bindings = load_bindings(f.bindings, in.source.skeleton, tgt, root);
      if (f.root_velocity != "auto") in.bindings.bind_root_velocity = root;
    } else {
      in.bindings = auto_bind(in.source.skeleton, tgt, f.chain_length, f.top_k).bindings;
      in.bindings.bind_root_velocity = root;
    }
    validate_bindings(in.bindings, tgt.joint_count(), in.source.skeleton.joint_count());
  });
  return in;
}

inline TransferConfig finish_config(TransferFlags& f, std::size_t source_frames) {
  TransferConfig c = f.config;
  c.feature_mode = parse_feature_mode(f.feature_mode);
  c.normalize = !f.no_normalize;
  if (f.keyframe_stride > 0) {
    std::vector<bool> mask(source_frames);
    for (std::size_t i = 0; i < source_frames; ++i) mask[i] = i % f.keyframe_stride == 0;
    c.keyframe_mask = mask;
  }
  return c;
}

}  // namespace detail

// Runs the command line `args` (program name excluded) and returns the exit
// code. Reports go to `out`, diagnostics to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const std::function<int(const std::string&, int, const std::string&, const std::string&)>& serve = {}) {
  CLI::App app("Sparse-binding motion transfer between skeletons", "mxfer");
  app.require_subcommand(1);

  detail::CommonFlags transfer_common;
  detail::TransferFlags transfer_flags;
  auto* transfer_cmd = app.add_subcommand("transfer", "Retarget a source clip onto a target skeleton");
  detail::add_common(transfer_cmd, transfer_common);
  detail::add_transfer_flags(transfer_cmd, transfer_flags);
  transfer_cmd->add_option("--out", transfer_flags.out, "Output BVH path")->required();

  std::string ab_source;
  std::string ab_target;
  std::size_t ab_length = 4;
  std::size_t ab_top_k = 5;
  std::string ab_save;
  auto* autobind_cmd = app.add_subcommand("autobind", "Rank chain pairs by bone-direction similarity");
  autobind_cmd->add_option("--source", ab_source, "Source BVH")->required();
  autobind_cmd->add_option("--target", ab_target, "Target BVH")->required();
  autobind_cmd->add_option("--chain-length", ab_length, "Chain length")->capture_default_str();
  autobind_cmd->add_option("--top-k", ab_top_k, "Number of proposals")->capture_default_str();
  autobind_cmd->add_option("--save", ab_save, "Write the merged proposals as a binding file");

  detail::CommonFlags metrics_common;
  detail::TransferFlags metrics_flags;
  metrics_flags.variants = 5;
  std::vector<std::string> metrics_results;
  auto* metrics_cmd = app.add_subcommand("metrics", "Evaluate results, or run a transfer and evaluate it");
  detail::add_common(metrics_cmd, metrics_common);
  detail::add_transfer_flags(metrics_cmd, metrics_flags);
  metrics_cmd->add_option("--result", metrics_results, "Result BVH to evaluate instead of running a transfer");

  int port = 7842;
  std::string host = "127.0.0.1";
  std::string static_dir;
  std::string persist_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP/JSON service");
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();
  serve_cmd->add_option("--host", host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Directory of UI assets served at /");
  serve_cmd->add_option("--persist", persist_dir, "Directory for session snapshots");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    const auto chosen = app.get_subcommands();
    err << e.what() << "\n\n" << (chosen.empty() ? app.help() : chosen.front()->help());
    return exit_code::parse;
  }

  try {
    if (*transfer_cmd) {
      auto in = detail::load_inputs(transfer_common);
      const TransferConfig config = detail::stage(exit_code::transfer, [&] {
        return detail::finish_config(transfer_flags, in.source.motion.frames());
      });
      const auto job = detail::stage(exit_code::transfer, [&] {
        return run_transfer(in.source, in.targets, in.bindings, config, transfer_flags.variants);
      });
      Json outputs = Json::array();
      detail::stage(exit_code::transfer, [&] {
        for (std::size_t i = 0; i < job.rotations.size(); ++i) {
          auto bvh = result_bvh(in.targets[0].skeleton, job.rotations[i], in.targets[0].root0);
          for (const auto& w : bvh.gimbal_warnings) err << "warning: near gimbal lock at " << w << '\n';
          const std::string path = variant_path(transfer_flags.out, i, job.rotations.size());
          save_bvh(path, bvh.file);
          outputs.push_back(path);
        }
      });
      Json report = {{"outputs", outputs},
                     {"config", config_to_json(config)},
                     {"energy", energy_json(job)},
                     {"metrics", metrics_report(in.source, in.targets, in.bindings, job)}};
      out << report.dump(2) << '\n';
      return exit_code::ok;
    }

    if (*autobind_cmd) {
      const auto [src, tgt] = detail::stage(exit_code::parse, [&] {
        return std::pair{Skeleton::from_raw(load_bvh(ab_source).joints), Skeleton::from_raw(load_bvh(ab_target).joints)};
      });
      Json proposals = Json::array();
      detail::stage(exit_code::binding, [&] {
        if (ab_top_k == 0) return;
        const auto r = auto_bind(src, tgt, ab_length, ab_top_k);
        proposals = proposals_to_json(r, src, tgt);
        if (!ab_save.empty()) save_bindings(ab_save, r.bindings, src, tgt);
      });
      out << proposals.dump(2) << '\n';
      return exit_code::ok;
    }

    if (*metrics_cmd) {
      auto in = detail::load_inputs(metrics_common);
      JobOutput job;
      if (!metrics_results.empty()) {
        detail::stage(exit_code::parse, [&] {
          for (const auto& path : metrics_results) {
            const Character r = load_character(path);
            if (!r.skeleton.same_structure(in.targets[0].skeleton)) {
              throw Error(ErrorCode::ShapeMismatch, path + " does not use the target skeleton");
            }
            job.rotations.push_back(r.motion);
          }
        });
      } else {
        const TransferConfig config = detail::stage(exit_code::transfer, [&] {
          return detail::finish_config(metrics_flags, in.source.motion.frames());
        });
        job = detail::stage(exit_code::transfer, [&] {
          return run_transfer(in.source, in.targets, in.bindings, config, metrics_flags.variants);
        });
      }
      Json report = detail::stage(exit_code::transfer, [&] {
        return metrics_report(in.source, in.targets, in.bindings, job);
      });
      if (!metrics_results.empty()) report["fps"] = nullptr;
      out << report.dump(2) << '\n';
      return exit_code::ok;
    }

    if (*serve_cmd) {
      if (!serve) {
        err << "serve is not available in this build\n";
        return exit_code::parse;
      }
      return serve(host, port, static_dir, persist_dir);
    }
  } catch (const detail::StageError& e) {
    err << e.message << '\n';
    return e.code;
  }
  return exit_code::parse;
}

}  // namespace mxfer
