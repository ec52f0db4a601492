#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <png.h>

#include "zorank/service/http.hpp"
#include "zorank/service/render.hpp"
#include "zorank/service/session.hpp"

using namespace zorank;
using namespace zorank::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("zorank-service-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Deterministic ids and a hand-driven clock for tests.
struct Fixture {
  fs::path dir;
  std::shared_ptr<std::atomic<std::uint64_t>> counter = std::make_shared<std::atomic<std::uint64_t>>(0);
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1000);

  explicit Fixture(const std::string& name) : dir(fresh_dir(name)) {}

  ManagerOptions options(std::optional<std::chrono::milliseconds> ttl = std::nullopt) const {
    ManagerOptions o;
    o.data_dir = dir;
    o.batch_ttl = ttl;
    auto c = counter;
    o.ids = [c](std::size_t bytes) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%0*llx", static_cast<int>(2 * bytes),
                    static_cast<unsigned long long>(++*c));
      return std::string(buf);
    };
    auto n = now;
    o.clock = [n] { return n->load(); };
    return o;
  }
};

json swatch_request(std::uint64_t seed = 7) {
  return {{"renderer", {{"id", "color-swatch"}}}, {"seed", seed}, {"config", {{"m", 6}}}};
}

std::vector<std::string> ids_of(const json& batch) {
  std::vector<std::string> ids;
  for (const auto& c : batch.at("candidates")) ids.push_back(c.at("candidate_id").get<std::string>());
  return ids;
}

std::array<unsigned char, 3> first_pixel(const std::string& png_bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_memory(&image, png_bytes.data(), png_bytes.size()));
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
  REQUIRE(png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr));
  return {pixels[0], pixels[1], pixels[2]};
}

}  // namespace

TEST_SUITE("render") {
  TEST_CASE("color swatch at zero is mid-gray") {
    RendererSpec spec;
    const Vector x(3, 0.0);
    const Payload p = render(spec, x);
    CHECK(p.media_type == "image/png");
    CHECK(p.bytes.substr(1, 3) == "PNG");
    const auto px = first_pixel(p.bytes);
    CHECK(px == std::array<unsigned char, 3>{128, 128, 128});
    const auto red = first_pixel(render(spec, Vector{10.0, -10.0, 0.0}).bytes);
    CHECK(red == std::array<unsigned char, 3>{255, 0, 128});
  }

  TEST_CASE("rendering is pure") {
    RendererSpec swatch;
    const Vector x{0.3, -1.2, 2.0};
    CHECK(render(swatch, x).bytes == render(swatch, x).bytes);
    RendererSpec curve;
    curve.id = RendererId::FourierCurve;
    curve.harmonics = 2;
    const Vector y{0.1, 0.2, -0.3, 0.4};
    CHECK(render(curve, y).bytes == render(curve, y).bytes);
  }

  TEST_CASE("all-zero Fourier coefficients give a circle") {
    const auto radii = curve_radii(Vector(6, 0.0), 64);
    for (double r : radii) CHECK(r == 1.0);
    const auto bumpy = curve_radii(Vector{0.5, 0.0}, 4);
    CHECK(bumpy[0] == doctest::Approx(std::exp(0.5)));
    CHECK(bumpy[2] == doctest::Approx(std::exp(-0.5)));
    RendererSpec curve;
    curve.id = RendererId::FourierCurve;
    curve.harmonics = 3;
    curve.size = 128;
    const Payload p = render(curve, Vector(6, 0.0));
    CHECK(p.media_type == "image/svg+xml");
    CHECK(p.bytes.find("<svg") == 0);
    CHECK(p.bytes.find("M121.600 64.000") != std::string::npos);  // radius 0.45 * 128 from center
  }

  TEST_CASE("input checks") {
    RendererSpec swatch;
    CHECK_THROWS_AS(render(swatch, Vector(5, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(render(swatch, Vector{0.0, std::nan(""), 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(parse_renderer(json{{"id", "mandelbrot"}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_renderer(json{{"id", "color-swatch"}, {"harmonics", 2}}), std::invalid_argument);
    CHECK(parse_renderer(json{{"id", "fourier-curve"}, {"harmonics", 4}}).dim() == 8);
  }

  TEST_CASE("base64 round trip") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
    std::string all;
    for (int i = 0; i < 256; ++i) all += static_cast<char>(i);
    CHECK(base64_decode(base64_encode(all)) == all);
    CHECK_THROWS_AS(base64_decode("abc"), std::invalid_argument);
  }
}

TEST_SUITE("session lifecycle") {
  TEST_CASE("create issues m rendered candidates and logs one batch") {
    Fixture fx("create");
    SessionManager manager(fx.options());
    const json created = manager.create(swatch_request());
    const json& batch = created.at("batch");
    CHECK(batch.at("phase") == "rank");
    CHECK(batch.at("candidates").size() == 6);
    CHECK(batch.at("candidates")[0].at("payload").at("media_type") == "image/png");
    const json history = manager.get(created.at("session_id"))->history();
    int issued = 0;
    for (const auto& e : history.at("events")) issued += e.at("type") == "batch_issued";
    CHECK(issued == 1);
  }

  TEST_CASE("validation errors name the field") {
    Fixture fx("validation");
    SessionManager manager(fx.options());
    auto field_of = [&](const json& body) {
      try {
        manager.create(body);
      } catch (const ServiceError& e) {
        CHECK(e.kind() == ErrorKind::Invalid);
        return e.field();
      }
      return std::string("<accepted>");
    };
    CHECK(field_of({{"renderer", {{"id", "color-swatch"}}}, {"x0", {0, 0, 0, 0, 0}}}) == "x0");
    CHECK(field_of({{"renderer", {{"id", "color-swatch"}}}, {"dim", 5}}) == "dim");
    CHECK(field_of({{"config", {{"gamma", 1.5}}}}) == "config.gamma");
    CHECK(field_of({{"config", {{"m", 1}}}}) == "config.m");
    CHECK(field_of({{"config", {{"m", 4}, {"k", 5}}}}) == "config.k");
    CHECK(field_of({{"config", {{"eta", -1}}}}) == "config.eta");
    CHECK(field_of({{"colour", 1}}) == "colour");
    CHECK(field_of({{"renderer", {{"id", "nope"}}}}) == "renderer.id");
    CHECK(manager.session_ids().empty());
  }

  TEST_CASE("same seed and config give identical first batches") {
    Fixture fx("determinism");
    SessionManager manager(fx.options());
    const json a = manager.create(swatch_request(11)).at("batch");
    const json b = manager.create(swatch_request(11)).at("batch");
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.at("candidates")[i].at("x") == b.at("candidates")[i].at("x"));
      CHECK(a.at("candidates")[i].at("payload") == b.at("candidates")[i].at("payload"));
    }
  }

  TEST_CASE("rank, then select, through every branch") {
    Fixture fx("branches");
    SessionManager manager(fx.options());
    const json created = manager.create(swatch_request());
    auto session = manager.get(created.at("session_id"));
    json batch = created.at("batch");
    auto ids = ids_of(batch);

    SUBCASE("repeated id is rejected and the batch stays pending") {
      CHECK_THROWS_AS(session->submit_ranking(batch.at("batch_id"), {ids[0], ids[0]}), ServiceError);
      CHECK_THROWS_AS(session->submit_ranking(batch.at("batch_id"), {}), ServiceError);
      CHECK_THROWS_AS(session->submit_ranking(batch.at("batch_id"), {"zzzz"}), ServiceError);
      CHECK(session->current_batch().at("batch_id") == batch.at("batch_id"));
    }

    SUBCASE("partial ranking, then keep x*") {
      const InteractiveState before = session->state();
      const json r = session->submit_ranking(batch.at("batch_id"), {ids[2]});
      CHECK(r.at("k") == 1);
      const json select = r.at("batch");
      CHECK(select.at("phase") == "select");
      CHECK(select.at("candidates").size() == 7);
      CHECK(session->state().tau == 1);
      CHECK(session->state().batch_best == batch.at("candidates")[2].at("x").get<Vector>());
      const json s = session->submit_selection(select.at("batch_id"), ids_of(select)[0]);
      CHECK(s.at("moved") == false);
      CHECK(s.at("message") == "no move; refining gradient");
      CHECK(session->state().tau == 1);
      CHECK(session->state().best_point == before.best_point);
      CHECK(s.at("batch").at("phase") == "rank");
    }

    SUBCASE("full ranking, then take x**") {
      const json r = session->submit_ranking(batch.at("batch_id"), {ids[5], ids[4], ids[3], ids[2], ids[1], ids[0]});
      CHECK(r.at("k") == 6);
      const json select = r.at("batch");
      const json s = session->submit_selection(select.at("batch_id"), ids_of(select)[1]);
      CHECK(s.at("moved") == true);
      CHECK(session->state().best_point == batch.at("candidates")[5].at("x").get<Vector>());
      CHECK(session->state().tau == 0);
      CHECK(session->counters().moves == 1);
    }

    SUBCASE("scaled step moves x* there") {
      const json r = session->submit_ranking(batch.at("batch_id"), {ids[1], ids[0]});
      const json select = r.at("batch");
      const Vector target = select.at("candidates")[4].at("x").get<Vector>();
      session->submit_selection(select.at("batch_id"), ids_of(select)[4]);
      CHECK(session->state().best_point == target);
      CHECK(session->moves().back().accepted_exponent == 2);
    }

    SUBCASE("wrong phase and stale ids are conflicts") {
      try {
        session->submit_selection(batch.at("batch_id"), ids[0]);
        FAIL("expected a conflict");
      } catch (const ServiceError& e) {
        CHECK(e.kind() == ErrorKind::Conflict);
      }
      const json r = session->submit_ranking(batch.at("batch_id"), {ids[0]});
      try {
        session->submit_ranking(batch.at("batch_id"), {ids[1]});
        FAIL("expected a conflict");
      } catch (const ServiceError& e) {
        CHECK(e.kind() == ErrorKind::Conflict);
      }
      CHECK_THROWS_AS(session->submit_ranking("ffffffff", {ids[0]}), ServiceError);
    }
  }

  TEST_CASE("duplicate submissions replay the stored response") {
    Fixture fx("idempotent");
    SessionManager manager(fx.options());
    const json created = manager.create(swatch_request());
    auto session = manager.get(created.at("session_id"));
    const json batch = created.at("batch");
    const auto ids = ids_of(batch);
    const json first = session->submit_ranking(batch.at("batch_id"), {ids[3], ids[1]});
    const std::size_t events = session->history().at("events").size();
    json again = session->submit_ranking(batch.at("batch_id"), {ids[3], ids[1]});
    CHECK(again.at("replayed") == true);
    again.erase("replayed");
    CHECK(again == first);
    CHECK(session->history().at("events").size() == events);
    CHECK(session->counters().rank_rounds == 1);
  }

  TEST_CASE("terminate is idempotent and closes the session") {
    Fixture fx("terminate");
    SessionManager manager(fx.options());
    const json created = manager.create(swatch_request());
    auto session = manager.get(created.at("session_id"));
    CHECK(session->terminate().at("already_terminated") == false);
    CHECK(session->terminate().at("already_terminated") == true);
    CHECK(session->terminated());
    CHECK_THROWS_AS(session->current_batch(), ServiceError);
    const auto ids = ids_of(created.at("batch"));
    CHECK_THROWS_AS(session->submit_ranking(created.at("batch").at("batch_id"), {ids[0]}), ServiceError);
    CHECK_THROWS_AS(manager.get("0123"), ServiceError);
  }

  TEST_CASE("ground-truth export: three moves with non-increasing loss") {
    Fixture fx("export");
    SessionManager manager(fx.options());
    const Vector center{0.5, -0.25, 1.0};
    json body = swatch_request(3);
    body["ground_truth"] = {{"center", center}};
    const json created = manager.create(body);
    auto session = manager.get(created.at("session_id"));
    auto loss = [&](const Vector& x) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
      return s;
    };
    json batch = created.at("batch");
    int guard = 0;
    while (session->counters().moves < 3 && ++guard < 200) {
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& c : batch.at("candidates")) scored.emplace_back(loss(c.at("x").get<Vector>()), c.at("candidate_id"));
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      if (batch.at("phase") == "rank") {
        std::vector<std::string> order;
        for (const auto& [f, id] : scored) order.push_back(id);
        batch = session->submit_ranking(batch.at("batch_id"), order).at("batch");
      } else {
        batch = session->submit_selection(batch.at("batch_id"), scored.front().second).at("batch");
      }
    }
    REQUIRE(session->counters().moves == 3);
    std::istringstream lines(session->trajectory());
    std::string line;
    std::getline(lines, line);
    CHECK(json::parse(line).at("format") == "zorank-trajectory");
    double prev = loss(session->moves().front().point_before);
    int records = 0;
    while (std::getline(lines, line)) {
      const json rec = json::parse(line);
      ++records;
      CHECK(rec.at("t") == records);
      CHECK(rec.at("f").get<double>() <= prev);
      prev = rec.at("f").get<double>();
    }
    CHECK(records == 3);
  }

  TEST_CASE("replay rebuilds the same state, and a torn tail is dropped") {
    Fixture fx("replay");
    std::string id, state_image;
    json last_batch;
    {
      SessionManager manager(fx.options());
      const json created = manager.create(swatch_request(5));
      id = created.at("session_id");
      auto session = manager.get(id);
      json batch = created.at("batch");
      for (int round = 0; round < 6; ++round) {
        const auto ids = ids_of(batch);
        batch = batch.at("phase") == "rank"
                    ? session->submit_ranking(batch.at("batch_id"), {ids[round % 6], ids[(round + 1) % 6]}).at("batch")
                    : session->submit_selection(batch.at("batch_id"), ids[round % ids.size()]).at("batch");
      }
      state_image = session->status().at("state_image");
      last_batch = session->current_batch();
    }
    std::ofstream(fx.dir / (id + ".jsonl"), std::ios::app) << "{\"type\":\"ranking_sub";
    SessionManager reloaded(fx.options());
    CHECK(reloaded.load_errors().empty());
    auto session = reloaded.get(id);
    CHECK(session->status().at("state_image") == state_image);
    CHECK(session->current_batch() == last_batch);
    // The log is writable again after truncation.
    const auto ids = ids_of(last_batch);
    if (last_batch.at("phase") == "rank") {
      CHECK_NOTHROW(session->submit_ranking(last_batch.at("batch_id"), {ids[0]}));
    } else {
      CHECK_NOTHROW(session->submit_selection(last_batch.at("batch_id"), ids[0]));
    }
    SessionManager again(fx.options());
    CHECK(again.get(id)->status().at("state_image") == session->status().at("state_image"));
  }

  TEST_CASE("corrupt logs are reported, not fatal") {
    Fixture fx("corrupt");
    std::ofstream(fx.dir / "bad.jsonl") << "not json\n{\"type\":\"created\"}\n";
    SessionManager manager(fx.options());
    CHECK(manager.load_errors().size() == 1);
    CHECK(manager.session_ids().empty());
  }

  TEST_CASE("pending batches expire after the TTL") {
    Fixture fx("ttl");
    SessionManager manager(fx.options(std::chrono::milliseconds(60000)));
    const json created = manager.create(swatch_request());
    auto session = manager.get(created.at("session_id"));
    const json batch = created.at("batch");
    *fx.now += 30000;
    CHECK(session->current_batch().at("batch_id") == batch.at("batch_id"));
    *fx.now += 40000;
    const json fresh = session->current_batch();
    CHECK(fresh.at("batch_id") != batch.at("batch_id"));
    CHECK(fresh.at("candidates")[0].at("x") != batch.at("candidates")[0].at("x"));
    CHECK_THROWS_AS(session->submit_ranking(batch.at("batch_id"), {ids_of(batch)[0]}), ServiceError);
    CHECK_NOTHROW(session->submit_ranking(fresh.at("batch_id"), {ids_of(fresh)[0]}));
    // Replay reproduces the reissued batch.
    const std::string image = session->status().at("state_image");
    SessionManager reloaded(fx.options(std::chrono::milliseconds(60000)));
    CHECK(reloaded.get(session->id())->status().at("state_image") == image);
  }
}

TEST_SUITE("http") {
  TEST_CASE("server config file and environment overrides") {
    const fs::path dir = fresh_dir("config");
    std::ofstream(dir / "server.json") << R"({"port": 9001, "data_dir": "/tmp/a", "batch_ttl_seconds": 30})";
    auto env = [](const std::string& name) -> std::optional<std::string> {
      if (name == "ZORANK_DATA_DIR") return "/tmp/b";
      if (name == "ZORANK_LOG_LEVEL") return "debug";
      return std::nullopt;
    };
    const ServerConfig config = load_server_config(dir / "server.json", env);
    CHECK(config.port == 9001);
    CHECK(config.data_dir == "/tmp/b");
    CHECK(config.log_level == "debug");
    CHECK(config.batch_ttl->count() == 30);
    std::ofstream(dir / "bad.json") << R"({"prot": 1})";
    CHECK_THROWS_AS(load_server_config(dir / "bad.json", env), std::invalid_argument);
  }

  TEST_CASE("endpoints over a real socket") {
    Fixture fx("http");
    SessionManager manager(fx.options());
    ServerConfig config;
    httplib::Server server;
    install_routes(server, manager, config);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);

    auto created = client.Post("/sessions", swatch_request().dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const json body = json::parse(created->body);
    const std::string sid = body.at("session_id");
    const std::string base = "/sessions/" + sid;

    auto status = client.Get(base.c_str());
    CHECK(status->status == 200);
    CHECK(json::parse(status->body).at("phase") == "gradient-estimation");

    auto batch = client.Get((base + "/batch").c_str());
    const json b = json::parse(batch->body);
    const auto ids = ids_of(b);

    auto bad = client.Post((base + "/ranking").c_str(),
                           json{{"batch_id", b.at("batch_id")}, {"ranking", {ids[0], ids[0]}}}.dump(),
                           "application/json");
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).at("field") == "ranking");

    auto garbage = client.Post((base + "/ranking").c_str(), "{", "application/json");
    CHECK(garbage->status == 400);

    auto ok = client.Post((base + "/ranking").c_str(),
                          json{{"batch_id", b.at("batch_id")}, {"ranking", {ids[1]}}}.dump(), "application/json");
    CHECK(ok->status == 200);
    const json select = json::parse(ok->body).at("batch");

    auto stale = client.Post((base + "/ranking").c_str(),
                             json{{"batch_id", b.at("batch_id")}, {"ranking", {ids[2]}}}.dump(), "application/json");
    CHECK(stale->status == 409);

    auto picked = client.Post((base + "/selection").c_str(),
                              json{{"batch_id", select.at("batch_id")}, {"best", ids_of(select)[1]}}.dump(),
                              "application/json");
    CHECK(picked->status == 200);
    CHECK(json::parse(picked->body).at("moved") == true);

    auto history = client.Get((base + "/history").c_str());
    CHECK(json::parse(history->body).at("events").size() == 6);

    auto traj = client.Get((base + "/trajectory").c_str());
    CHECK(traj->status == 200);
    CHECK(traj->get_header_value("Content-Type") == "application/x-ndjson");

    CHECK(client.Post((base + "/terminate").c_str(), "", "application/json")->status == 200);
    CHECK(client.Post((base + "/terminate").c_str(), "", "application/json")->status == 200);
    CHECK(client.Get("/sessions/abcdef")->status == 404);
    CHECK(client.Get("/healthz")->status == 200);

    server.stop();
    worker.join();
  }
}
