#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mxfer/binding_io.hpp"
#include "mxfer/bvh.hpp"
#include "mxfer/pipeline.hpp"

#include <httplib.h>

namespace mxfer {

struct Session {
  std::string id;
  std::optional<Character> source;
  std::string source_text;
  std::vector<Character> targets;
  std::vector<std::string> target_texts;
  std::optional<BindingSet> bindings;
  TransferConfig config;
  std::size_t variants = 1;
  std::optional<JobOutput> job;
  std::optional<Json> metrics;
  std::size_t jobs_run = 0;
};

struct HttpError {
  int status;
  std::string name;
  std::string message;
};

// Summary of an uploaded clip: joint names, parent indices (-1 for the root),
// frame count and rate.
inline Json character_summary(const Character& c) {
  Json names = Json::array();
  Json parents = Json::array();
  for (const auto& j : c.skeleton.joints()) {
    names.push_back(j.name);
    parents.push_back(j.parent ? static_cast<long long>(*j.parent) : -1LL);
  }
  return {{"joints", names}, {"parents", parents}, {"frames", c.motion.frames()}, {"fps", c.motion.fps}};
}

inline Json positions_json(const Skeleton& skel, const Motion& motion, const Vec3& root0, std::size_t from,
                           std::size_t to) {
  const auto all = motion_positions(skel, motion, root0);
  Json frames = Json::array();
  for (std::size_t f = from; f < std::min(to, all.size()); ++f) {
    Json pose = Json::array();
    for (const auto& p : all[f]) pose.push_back({p.x(), p.y(), p.z()});
    frames.push_back(std::move(pose));
  }
  Json parents = Json::array();
  for (const auto& j : skel.joints()) parents.push_back(j.parent ? static_cast<long long>(*j.parent) : -1LL);
  return {{"parents", parents}, {"frames", frames}};
}

// Session store plus the HTTP routes over it. Mutations of one session are
// serialized by its mutex; distinct sessions proceed independently.
class Service {
 public:
  struct Options {
    std::string static_dir;
    std::string persist_dir;
  };

  explicit Service(Options options = {}) : options_(std::move(options)) {
    if (!options_.persist_dir.empty()) load_snapshots();
  }

  void install(httplib::Server& server) {
    if (!options_.static_dir.empty()) server.set_mount_point("/", options_.static_dir);

    server.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        auto s = std::make_shared<Entry>();
        {
          std::lock_guard lock(map_mutex_);
          s->session.id = "s" + std::to_string(++next_id_);
          sessions_[s->session.id] = s;
        }
        std::lock_guard lock(s->mutex);
        persist(s->session);
        return Json{{"id", s->session.id}};
      });
    });

    server.Get("/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) { return session_json(s); });
    });

    server.Post("/sessions/:id/source", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        const auto texts = uploads(req);
        if (texts.size() != 1) throw HttpError{400, "BadRequest", "upload exactly one source BVH"};
        Character c = parse_upload(texts[0]);
        s.source = std::move(c);
        s.source_text = texts[0];
        s.bindings.reset();
        clear_result(s);
        persist(s);
        return character_summary(*s.source);
      });
    });

    server.Post("/sessions/:id/targets", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        const auto texts = uploads(req);
        if (texts.empty()) throw HttpError{400, "BadRequest", "no target BVH uploaded"};
        std::vector<Character> targets = s.targets;
        for (const auto& t : texts) targets.push_back(parse_upload(t));
        try {
          check_targets(targets);
        } catch (const Error& e) {
          throw HttpError{422, std::string(e.name()), e.what()};
        }
        if (s.targets.empty()) s.bindings.reset();
        s.targets = std::move(targets);
        s.target_texts.insert(s.target_texts.end(), texts.begin(), texts.end());
        clear_result(s);
        persist(s);
        return targets_json(s);
      });
    });

    server.Delete("/sessions/:id/targets", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        s.targets.clear();
        s.target_texts.clear();
        s.bindings.reset();
        clear_result(s);
        persist(s);
        return targets_json(s);
      });
    });

    server.Get("/sessions/:id/autobind", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        require_characters(s);
        const std::size_t length = query_size(req, "L", 4);
        const std::size_t top_k = query_size(req, "top_k", 3);
        const Skeleton& tgt = s.targets[0].skeleton;
        if (top_k == 0) return Json{{"proposals", Json::array()}, {"bindings", nullptr}};
        auto r = domain([&] { return auto_bind(s.source->skeleton, tgt, length, top_k); });
        r.bindings.bind_root_velocity = default_root_velocity(s);
        return Json{{"proposals", proposals_to_json(r, s.source->skeleton, tgt)},
                    {"bindings", bindings_to_json(r.bindings, s.source->skeleton, tgt)}};
      });
    });

    server.Get("/sessions/:id/bindings", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        if (!s.bindings) return Json(nullptr);
        return bindings_to_json(*s.bindings, s.source->skeleton, s.targets[0].skeleton);
      });
    });

    server.Put("/sessions/:id/bindings", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        require_characters(s);
        const Json body = parse_body(req);
        BindingSet b = domain([&] {
          return bindings_from_json(body, s.source->skeleton, s.targets[0].skeleton, default_root_velocity(s));
        });
        s.bindings = std::move(b);
        clear_result(s);
        persist(s);
        return Json{{"bindings", bindings_to_json(*s.bindings, s.source->skeleton, s.targets[0].skeleton)},
                    {"binding_rate", binding_rate(s.bindings->size(), s.source->skeleton.joint_count(),
                                                  s.targets[0].skeleton.joint_count())}};
      });
    });

    server.Get("/sessions/:id/config", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) { return config_json(s); });
    });

    server.Put("/sessions/:id/config", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        const Json body = parse_body(req);
        if (!body.is_object()) throw HttpError{400, "BadRequest", "config must be a JSON object"};
        TransferConfig c = domain([&] { return config_from_json(body, s.config); });
        std::size_t variants = s.variants;
        if (body.contains("variants")) {
          if (!body["variants"].is_number_unsigned() || body["variants"].get<std::size_t>() == 0) {
            throw HttpError{422, "InvalidConfig", "variants must be a positive integer"};
          }
          variants = body["variants"].get<std::size_t>();
        }
        s.config = c;
        s.variants = variants;
        clear_result(s);
        persist(s);
        return config_json(s);
      });
    });

    server.Post("/sessions/:id/transfer", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        require_characters(s);
        if (!s.bindings) throw HttpError{409, "NoBindings", "set bindings before transferring"};
        auto job = domain([&] { return run_transfer(*s.source, s.targets, *s.bindings, s.config, s.variants); });
        s.job = std::move(job);
        s.metrics.reset();
        ++s.jobs_run;
        return Json{{"job", s.jobs_run},
                    {"status", "done"},
                    {"frames", s.job->rotations[0].frames()},
                    {"variants", s.job->rotations.size()},
                    {"seconds", s.job->seconds_per_variant * static_cast<double>(s.job->rotations.size())},
                    {"energy", energy_json(*s.job)}};
      });
    });

    server.Get("/sessions/:id/result/frames", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        require_result(s);
        const std::size_t frames = s.job->rotations[0].frames();
        const std::size_t from = query_size(req, "from", 0);
        const std::size_t to = std::min(query_size(req, "to", frames), frames);
        if (from > query_size(req, "to", frames)) throw HttpError{400, "BadRequest", "from exceeds to"};
        if (from >= frames) throw HttpError{400, "BadRequest", "from is past the last frame"};
        const std::size_t variant = query_size(req, "variant", 0);
        const std::size_t target = query_size(req, "target", 0);
        if (variant >= s.job->rotations.size()) throw HttpError{400, "BadRequest", "no such variant"};
        if (target >= s.targets.size()) throw HttpError{400, "BadRequest", "no such target example"};
        return Json{{"from", from},
                    {"to", to},
                    {"fps", s.source->motion.fps},
                    {"source", positions_json(s.source->skeleton, s.source->motion, s.source->root0, from, to)},
                    {"result", positions_json(s.targets[0].skeleton, s.job->rotations[variant], s.targets[0].root0, from, to)},
                    {"target", positions_json(s.targets[target].skeleton, s.targets[target].motion, s.targets[target].root0,
                                              from, to)}};
      });
    });

    server.Get("/sessions/:id/result/bvh", [this](const httplib::Request& req, httplib::Response& res) {
      std::string text;
      with_session(req, res, [&](Session& s) {
        require_result(s);
        const std::size_t variant = query_size(req, "variant", 0);
        if (variant >= s.job->rotations.size()) throw HttpError{400, "BadRequest", "no such variant"};
        text = write_bvh(result_bvh(s.targets[0].skeleton, s.job->rotations[variant], s.targets[0].root0).file);
        return Json();
      });
      if (res.status == 200) {
        res.set_content(text, "text/plain");
        res.set_header("Content-Disposition", "attachment; filename=\"result.bvh\"");
      }
    });

    server.Get("/sessions/:id/metrics", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) {
        require_result(s);
        if (!s.metrics) s.metrics = metrics_report(*s.source, s.targets, *s.bindings, *s.job);
        return *s.metrics;
      });
    });
  }

  std::size_t session_count() const {
    std::lock_guard lock(map_mutex_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
  };

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      const Json body = f();
      res.status = 200;
      res.set_content(body.dump(), "application/json");
    } catch (const HttpError& e) {
      res.status = e.status;
      res.set_content(Json{{"error", e.name}, {"message", e.message}}.dump(), "application/json");
    } catch (const Error& e) {
      res.status = 422;
      res.set_content(Json{{"error", std::string(e.name())}, {"message", e.what()}}.dump(), "application/json");
    }
  }

  template <typename F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& f) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard lock(map_mutex_);
      auto it = sessions_.find(req.path_params.at("id"));
      if (it != sessions_.end()) entry = it->second;
    }
    guarded(res, [&] {
      if (!entry) throw HttpError{404, "NotFound", "no session " + req.path_params.at("id")};
      std::lock_guard lock(entry->mutex);
      return f(entry->session);
    });
  }

  // Domain errors from the call become 422 responses carrying the error name.
  template <typename F>
  static auto domain(F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      throw HttpError{422, std::string(e.name()), e.what()};
    }
  }

  static std::vector<std::string> uploads(const httplib::Request& req) {
    std::vector<std::string> out;
    if (req.is_multipart_form_data()) {
      for (const auto& [name, file] : req.files) out.push_back(file.content);
    } else if (!req.body.empty()) {
      out.push_back(req.body);
    }
    return out;
  }

  static Character parse_upload(const std::string& text) {
    try {
      return load_character(parse_bvh(text));
    } catch (const Error& e) {
      throw HttpError{400, std::string(e.name()), e.what()};
    }
  }

  static Json parse_body(const httplib::Request& req) {
    try {
      return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      throw HttpError{400, "BadRequest", e.what()};
    }
  }

  static std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    std::size_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) {
      throw HttpError{400, "BadRequest", std::string("query parameter '") + key + "' must be a non-negative integer"};
    }
    return out;
  }

  static void require_characters(const Session& s) {
    if (!s.source || s.targets.empty()) throw HttpError{409, "MissingInput", "upload a source and a target first"};
  }

  static void require_result(const Session& s) {
    if (!s.job) throw HttpError{409, "NoResult", "run a transfer first"};
  }

  static bool default_root_velocity(const Session& s) {
    return carries_locomotion(s.source->skeleton, s.source->motion) &&
           carries_locomotion(s.targets[0].skeleton, s.targets[0].motion);
  }

  static void clear_result(Session& s) {
    s.job.reset();
    s.metrics.reset();
  }

  static Json targets_json(const Session& s) {
    Json out = Json::array();
    for (const auto& t : s.targets) out.push_back(character_summary(t));
    return {{"targets", out}};
  }

  static Json config_json(const Session& s) {
    Json c = config_to_json(s.config);
    c["variants"] = s.variants;
    return c;
  }

  static Json session_json(const Session& s) {
    Json out = {{"id", s.id}, {"config", config_json(s)}, {"jobs", s.jobs_run}, {"has_result", s.job.has_value()}};
    out["source"] = s.source ? character_summary(*s.source) : Json(nullptr);
    out["targets"] = targets_json(s)["targets"];
    out["bindings"] = s.bindings ? bindings_to_json(*s.bindings, s.source->skeleton, s.targets[0].skeleton) : Json(nullptr);
    return out;
  }

  // Snapshot layout: DIR/<id>/session.json, source.bvh, target_<k>.bvh.
  void persist(const Session& s) const {
    if (options_.persist_dir.empty()) return;
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(options_.persist_dir) / s.id;
    fs::create_directories(dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".bvh") fs::remove(e.path());
    }
    if (s.source) std::ofstream(dir / "source.bvh", std::ios::binary) << s.source_text;
    for (std::size_t k = 0; k < s.target_texts.size(); ++k) {
      std::ofstream(dir / ("target_" + std::to_string(k) + ".bvh"), std::ios::binary) << s.target_texts[k];
    }
    Json meta = {{"id", s.id}, {"config", config_json(s)}, {"targets", s.target_texts.size()}};
    meta["bindings"] = s.bindings ? bindings_to_json(*s.bindings, s.source->skeleton, s.targets[0].skeleton) : Json(nullptr);
    std::ofstream(dir / "session.json", std::ios::binary) << meta.dump(2) << '\n';
  }

  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void load_snapshots() {
    namespace fs = std::filesystem;
    if (!fs::exists(options_.persist_dir)) return;
    for (const auto& e : fs::directory_iterator(options_.persist_dir)) {
      const fs::path meta_path = e.path() / "session.json";
      if (!e.is_directory() || !fs::exists(meta_path)) continue;
      auto entry = std::make_shared<Entry>();
      Session& s = entry->session;
      try {
        const Json meta = Json::parse(slurp(meta_path));
        s.id = meta.at("id").get<std::string>();
        if (fs::exists(e.path() / "source.bvh")) {
          s.source_text = slurp(e.path() / "source.bvh");
          s.source = load_character(parse_bvh(s.source_text));
        }
        for (std::size_t k = 0; k < meta.at("targets").get<std::size_t>(); ++k) {
          s.target_texts.push_back(slurp(e.path() / ("target_" + std::to_string(k) + ".bvh")));
          s.targets.push_back(load_character(parse_bvh(s.target_texts.back())));
        }
        s.config = config_from_json(meta.at("config"));
        s.variants = meta.at("config").value("variants", std::size_t{1});
        if (!meta.at("bindings").is_null() && s.source && !s.targets.empty()) {
          s.bindings = bindings_from_json(meta.at("bindings"), s.source->skeleton, s.targets[0].skeleton);
        }
      } catch (const std::exception&) {
        continue;
      }
      if (s.id.size() > 1 && s.id[0] == 's') {
        std::size_t n = 0;
        std::from_chars(s.id.data() + 1, s.id.data() + s.id.size(), n);
        next_id_ = std::max(next_id_, n);
      }
      sessions_[s.id] = entry;
    }
  }

  Options options_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t next_id_ = 0;
};

// Blocks serving on host:port until the server stops.
inline int serve(const std::string& host, int port, const std::string& static_dir, const std::string& persist_dir,
                 std::ostream& log) {
  Service service({static_dir, persist_dir});
  httplib::Server server;
  service.install(server);
  log << "listening on http://" << host << ":" << port << std::endl;
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace mxfer
