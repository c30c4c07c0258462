#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "mxfer/service.hpp"

namespace {

using namespace mxfer;
namespace fs = std::filesystem;

std::string fixture_text(const std::string& name) {
  std::ifstream in(std::string(MXFER_FIXTURES) + "/" + name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A service listening on an ephemeral local port for the lifetime of the object.
class Running {
 public:
  explicit Running(Service::Options options = {}) : service_(std::move(options)) {
    service_.install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

 private:
  Service service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Json body_of(const httplib::Result& r) { return Json::parse(r->body); }

std::string create(httplib::Client& c) {
  auto r = c.Post("/sessions");
  EXPECT_EQ(r->status, 200);
  return body_of(r)["id"].get<std::string>();
}

// Source and target uploaded, autobind proposals accepted.
std::string prepared(httplib::Client& c, const std::string& source = "biped22_xyz.bvh",
                     const std::string& target = "quadruped.bvh") {
  const std::string id = create(c);
  httplib::MultipartFormDataItems items = {{"file", fixture_text(source), source, "text/plain"}};
  EXPECT_EQ(c.Post("/sessions/" + id + "/source", items)->status, 200);
  EXPECT_EQ(c.Post("/sessions/" + id + "/targets", fixture_text(target), "text/plain")->status, 200);
  auto ab = c.Get("/sessions/" + id + "/autobind?L=3&top_k=2");
  EXPECT_EQ(ab->status, 200);
  EXPECT_EQ(c.Put("/sessions/" + id + "/bindings", body_of(ab)["bindings"].dump(), "application/json")->status, 200);
  return id;
}

TEST(Service, HappyPath) {
  Running svc;
  auto c = svc.client();
  const std::string id = create(c);
  EXPECT_EQ(id, "s1");

  httplib::MultipartFormDataItems src = {{"file", fixture_text("biped22_xyz.bvh"), "biped22_xyz.bvh", "text/plain"}};
  auto r = c.Post("/sessions/" + id + "/source", src);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["joints"].size(), 22u);
  EXPECT_EQ(body_of(r)["parents"][0], -1);
  EXPECT_EQ(body_of(r)["frames"], 90);

  httplib::MultipartFormDataItems tgts = {{"file", fixture_text("quadruped.bvh"), "a.bvh", "text/plain"},
                                          {"file", fixture_text("quadruped.bvh"), "b.bvh", "text/plain"}};
  r = c.Post("/sessions/" + id + "/targets", tgts);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["targets"].size(), 2u);

  r = c.Get("/sessions/" + id + "/autobind?L=3&top_k=2");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["proposals"].size(), 2u);
  const Json bindings = body_of(r)["bindings"];

  r = c.Put("/sessions/" + id + "/bindings", bindings.dump(), "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_GT(body_of(r)["binding_rate"].get<double>(), 0.0);

  r = c.Put("/sessions/" + id + "/config", R"({"alpha": 0.9, "seed": 3, "variants": 2})", "application/json");
  ASSERT_EQ(r->status, 200);
  EXPECT_DOUBLE_EQ(body_of(r)["alpha"].get<double>(), 0.9);
  EXPECT_EQ(body_of(r)["patch_size"], 11);

  r = c.Post("/sessions/" + id + "/transfer");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body_of(r)["job"], 1);
  EXPECT_EQ(body_of(r)["status"], "done");
  EXPECT_EQ(body_of(r)["variants"], 2);

  r = c.Get("/sessions/" + id + "/result/frames?from=0&to=1");
  ASSERT_EQ(r->status, 200);
  const Json frames = body_of(r);
  EXPECT_EQ(frames["source"]["frames"].size(), 1u);
  EXPECT_EQ(frames["source"]["frames"][0].size(), 22u);
  EXPECT_EQ(frames["result"]["frames"][0].size(), frames["target"]["frames"][0].size());
  EXPECT_EQ(frames["result"]["parents"], frames["target"]["parents"]);

  r = c.Get("/sessions/" + id + "/result/bvh?variant=1");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(parse_bvh(r->body).motion.frame_count, 90u);

  r = c.Get("/sessions/" + id + "/metrics");
  ASSERT_EQ(r->status, 200);
  for (const char* key : {"fid", "freq_align", "contact_consistency", "diversity", "binding_rate", "fps"}) {
    EXPECT_TRUE(body_of(r).contains(key)) << key;
  }

  r = c.Get("/sessions/" + id);
  ASSERT_EQ(r->status, 200);
  EXPECT_TRUE(body_of(r)["has_result"].get<bool>());
  EXPECT_EQ(create(c), "s2");
}

TEST(Service, TransferWithoutBindingsIsConflict) {
  Running svc;
  auto c = svc.client();
  const std::string id = create(c);
  EXPECT_EQ(c.Post("/sessions/" + id + "/transfer")->status, 409);
  c.Post("/sessions/" + id + "/source", fixture_text("snake.bvh"), "text/plain");
  c.Post("/sessions/" + id + "/targets", fixture_text("snake.bvh"), "text/plain");
  auto r = c.Post("/sessions/" + id + "/transfer");
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(body_of(r)["error"], "NoBindings");
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames")->status, 409);
  EXPECT_EQ(c.Get("/sessions/" + id + "/metrics")->status, 409);
}

TEST(Service, FramesRangeValidation) {
  Running svc;
  auto c = svc.client();
  const std::string id = prepared(c);
  ASSERT_EQ(c.Post("/sessions/" + id + "/transfer")->status, 200);
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames?from=5&to=2")->status, 400);
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames?from=x")->status, 400);
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames?from=500&to=600")->status, 400);
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames?variant=3")->status, 400);
  auto r = c.Get("/sessions/" + id + "/result/frames?from=80&to=1000");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["result"]["frames"].size(), 10u);
}

TEST(Service, ErrorStatuses) {
  Running svc;
  auto c = svc.client();
  EXPECT_EQ(c.Get("/sessions/s99")->status, 404);
  EXPECT_EQ(c.Post("/sessions/s99/transfer")->status, 404);

  const std::string id = create(c);
  auto r = c.Post("/sessions/" + id + "/source", "HIERARCHY\nROOT A\n{\n", "text/plain");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body_of(r)["error"], "SyntaxError");
  EXPECT_EQ(c.Post("/sessions/" + id + "/source", "", "text/plain")->status, 400);

  EXPECT_EQ(c.Put("/sessions/" + id + "/bindings", "[]", "application/json")->status, 409);
  c.Post("/sessions/" + id + "/source", fixture_text("biped22.bvh"), "text/plain");
  c.Post("/sessions/" + id + "/targets", fixture_text("biped22.bvh"), "text/plain");

  r = c.Put("/sessions/" + id + "/bindings", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);
  r = c.Put("/sessions/" + id + "/bindings", R"([{"target": "Tail", "source": "Hips"}])", "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "UnknownJoint");
  r = c.Put("/sessions/" + id + "/bindings",
            R"([{"target": "Hips", "source": "Hips"}, {"target": "Hips", "source": "Spine"}])", "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "DuplicateTarget");

  r = c.Put("/sessions/" + id + "/config", R"({"alpha": 3})", "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "InvalidConfig");
  EXPECT_EQ(c.Put("/sessions/" + id + "/config", R"({"variants": 0})", "application/json")->status, 422);
  EXPECT_EQ(c.Put("/sessions/" + id + "/config", "[1]", "application/json")->status, 400);

  r = c.Get("/sessions/" + id + "/autobind?L=40");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "NoChains");
  r = c.Get("/sessions/" + id + "/autobind?top_k=0");
  EXPECT_EQ(r->status, 200);
  EXPECT_TRUE(body_of(r)["proposals"].empty());

  r = c.Post("/sessions/" + id + "/targets", fixture_text("snake.bvh"), "text/plain");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "ShapeMismatch");

  ASSERT_EQ(c.Put("/sessions/" + id + "/bindings", R"([{"target": "Hips", "source": "Hips"}])", "application/json")->status,
            200);
  ASSERT_EQ(c.Put("/sessions/" + id + "/config", R"({"patch_size": 400})", "application/json")->status, 200);
  r = c.Post("/sessions/" + id + "/transfer");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "TooShort");
}

TEST(Service, AlphaOneFeedsMatchAcrossSeeds) {
  Running svc;
  auto c = svc.client();
  std::vector<std::string> feeds;
  for (int seed : {1, 2}) {
    const std::string id = prepared(c);
    c.Put("/sessions/" + id + "/config", Json{{"alpha", 1.0}, {"seed", seed}}.dump(), "application/json");
    ASSERT_EQ(c.Post("/sessions/" + id + "/transfer")->status, 200);
    feeds.push_back(c.Get("/sessions/" + id + "/result/frames?from=0&to=90")->body);
  }
  EXPECT_EQ(feeds[0], feeds[1]);
}

TEST(Service, SessionsRunConcurrently) {
  Running svc;
  auto c = svc.client();
  const std::string a = prepared(c);
  const std::string b = prepared(c, "snake.bvh", "snake.bvh");
  int status_a = 0;
  int status_b = 0;
  std::thread ta([&] {
    auto cl = svc.client();
    status_a = cl.Post("/sessions/" + a + "/transfer")->status;
  });
  std::thread tb([&] {
    auto cl = svc.client();
    status_b = cl.Post("/sessions/" + b + "/transfer")->status;
  });
  ta.join();
  tb.join();
  EXPECT_EQ(status_a, 200);
  EXPECT_EQ(status_b, 200);
}

TEST(Service, MismatchedFrameRatesAreRejected) {
  Running svc;
  auto c = svc.client();
  const std::string id = prepared(c, "biped22.bvh", "quadruped.bvh");
  auto r = c.Post("/sessions/" + id + "/transfer");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(body_of(r)["error"], "ShapeMismatch");
  EXPECT_EQ(c.Get("/sessions/" + id + "/result/frames")->status, 409);
}

TEST(Service, PersistedSessionsReload) {
  const fs::path dir = fs::temp_directory_path() / "mxfer_service_persist";
  fs::remove_all(dir);
  std::string bindings;
  {
    Running svc({"", dir.string()});
    auto c = svc.client();
    const std::string id = prepared(c);
    c.Put("/sessions/" + id + "/config", R"({"alpha": 0.7, "variants": 3})", "application/json");
    bindings = c.Get("/sessions/" + id + "/bindings")->body;
  }
  Running svc({"", dir.string()});
  auto c = svc.client();
  auto r = c.Get("/sessions/s1");
  ASSERT_EQ(r->status, 200);
  EXPECT_DOUBLE_EQ(body_of(r)["config"]["alpha"].get<double>(), 0.7);
  EXPECT_EQ(body_of(r)["config"]["variants"], 3);
  EXPECT_EQ(body_of(r)["source"]["joints"].size(), 22u);
  EXPECT_EQ(c.Get("/sessions/s1/bindings")->body, bindings);
  EXPECT_EQ(c.Post("/sessions/s1/transfer")->status, 200);
  EXPECT_EQ(create(c), "s2");
  fs::remove_all(dir);
}

TEST(Service, ServesStaticAssets) {
  const fs::path dir = fs::temp_directory_path() / "mxfer_service_static";
  fs::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>ui</html>";
  Running svc({dir.string(), ""});
  auto c = svc.client();
  auto r = c.Get("/index.html");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>ui</html>");
  EXPECT_EQ(c.Get("/")->status, 200);
  fs::remove_all(dir);
}

}  // namespace
