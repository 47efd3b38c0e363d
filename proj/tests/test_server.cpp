#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "adf/server.hpp"

using namespace adf;
using nlohmann::json;

namespace {

struct Capture {
  std::vector<json> messages;
  Session::Sink sink() {
    return [this](const std::string& s) { messages.push_back(json::parse(s)); };
  }
  std::vector<json> of_type(const std::string& type) const {
    std::vector<json> out;
    for (const auto& m : messages)
      if (m.at("type") == type) out.push_back(m);
    return out;
  }
  json last(const std::string& type) const {
    const auto all = of_type(type);
    return all.empty() ? json() : all.back();
  }
};

ClientMessage msg(std::int64_t seq, ControlCommand c) { return {seq, std::move(c)}; }

TrialConfig mini_trial(std::uint64_t seed = 1) {
  TrialConfig c;
  c.mini = true;
  c.scenario = {ScenarioKind::Simple, seed};
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("adf_srv_" + name)).string();
}

}  // namespace

TEST(Protocol, EveryCommandRoundTrips) {
  TrialConfig cfg = mini_trial(0xFFFFFFFFFFFFFFFFULL);
  cfg.blue_starts = {{{1, 2}, 0.5}};
  cfg.red_route = {{3, 4}};
  cfg.algorithm = AgentAlgorithm::Random;
  cfg.participant = "p7";
  const std::vector<ControlCommand> cmds{AddWaypoint{2, 1.5, -3.25}, DeleteWaypoint{1, 0}, Pause{}, Resume{},
                                         SetSpeed{5}, Configure{cfg}, Start{}, Stop{}};
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const ClientMessage m{static_cast<std::int64_t>(i + 10), cmds[i]};
    const std::string text = client_message_to_json(m);
    const json doc = json::parse(text);
    EXPECT_TRUE(doc.contains("type") && doc.contains("seq") && doc.contains("payload"));
    const ClientMessage back = parse_client_message(text);
    EXPECT_EQ(back.seq, m.seq);
    EXPECT_EQ(back.command.index(), m.command.index());
    EXPECT_EQ(client_message_to_json(back), text);
  }
}

TEST(Protocol, MalformedMessagesRaiseParse) {
  for (const std::string bad : {"", "[1,2]", "{\"seq\":1}", "{\"type\":\"fly\",\"seq\":1}",
                                "{\"type\":\"add_waypoint\",\"seq\":1,\"payload\":{\"drone_id\":1}}",
                                "{\"type\":\"set_speed\",\"seq\":1,\"payload\":{\"multiplier\":\"fast\"}}"}) {
    try {
      parse_client_message(bad);
      ADD_FAILURE() << "accepted: " << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Parse) << bad;
    }
  }
}

TEST(Protocol, ErrorEnvelope) {
  const json e = json::parse(error_message(4, 9, ErrorCode::UnknownDrone, "no drone 9"));
  EXPECT_EQ(e["type"], "error");
  EXPECT_EQ(e["seq"], 4);
  EXPECT_EQ(e["payload"]["code"], "unknown_drone");
  EXPECT_EQ(e["payload"]["in_reply_to"], 9);
}

TEST(Session, ConfigureStartTickToEnd) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  s.handle(msg(1, Configure{mini_trial()}));
  const json ack = cap.last("config_ack");
  ASSERT_FALSE(ack.is_null());
  EXPECT_EQ(ack["payload"]["in_reply_to"], 1);
  EXPECT_EQ(ack["payload"]["world"]["map_side"], "600");
  s.handle(msg(2, Start{}));
  EXPECT_EQ(s.phase(), Phase::Running);
  int guard = 0;
  while (s.phase() == Phase::Running && guard++ < 1000) s.tick();
  EXPECT_EQ(s.phase(), Phase::Ended);
  const json end = cap.last("episode_end");
  ASSERT_FALSE(end.is_null());
  EXPECT_EQ(end["payload"]["interrupted"], false);
  EXPECT_EQ(end["payload"]["source"], "human");
  EXPECT_EQ(end["payload"]["ticks"], s.runner()->state().tick);
  EXPECT_EQ(s.wins() + s.losses() + (end["payload"]["outcome"] == "timeout" ? 1 : 0), 1);
  ASSERT_TRUE(s.last_demo().has_value());
  EXPECT_EQ(replay_divergence(*s.last_demo()), 0.0);

  // Outgoing sequence numbers increase strictly.
  for (std::size_t i = 1; i < cap.messages.size(); ++i)
    EXPECT_GT(cap.messages[i]["seq"].get<std::int64_t>(), cap.messages[i - 1]["seq"].get<std::int64_t>());
}

TEST(Session, StateUpdateCarriesRequiredFields) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  TrialConfig c = mini_trial();
  c.reveal_red = true;
  s.handle(msg(1, Configure{c}));
  s.handle(msg(2, Start{}));
  s.tick();
  s.broadcast_state();
  const json st = cap.last("state_update")["payload"];
  for (const char* key : {"tick", "blues", "red_visible", "score", "phase", "speed"}) EXPECT_TRUE(st.contains(key)) << key;
  EXPECT_EQ(st["tick"], 1);
  ASSERT_EQ(st["blues"].size(), 5u);
  for (const char* key : {"id", "x", "y", "heading", "waypoints"}) EXPECT_TRUE(st["blues"][0].contains(key)) << key;
  EXPECT_TRUE(st["red_visible"].is_object());
  EXPECT_EQ(st["phase"], "running");
}

TEST(Session, PhaseRulesAndErrors) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  auto last_error_code = [&] { return cap.last("error")["payload"]["code"].get<std::string>(); };

  s.handle(msg(1, AddWaypoint{0, 1, 1}));
  EXPECT_EQ(last_error_code(), "invalid_phase");
  s.handle(msg(2, Pause{}));
  EXPECT_EQ(last_error_code(), "invalid_phase");
  s.handle(msg(3, Stop{}));
  EXPECT_EQ(last_error_code(), "invalid_phase");

  TrialConfig bad = mini_trial();
  bad.update_frequency = 0;
  s.handle(msg(4, Configure{bad}));
  EXPECT_EQ(last_error_code(), "invalid_config");
  TrialConfig missing = mini_trial();
  missing.algorithm = AgentAlgorithm::Trained;
  missing.checkpoint = "/nonexistent/ck.json";
  s.handle(msg(5, Configure{missing}));
  EXPECT_EQ(last_error_code(), "io");

  s.handle(msg(6, Configure{mini_trial()}));
  s.handle(msg(7, Start{}));
  s.handle(msg(8, Configure{mini_trial()}));
  EXPECT_EQ(last_error_code(), "invalid_phase");
  s.handle(msg(9, Start{}));
  EXPECT_EQ(last_error_code(), "invalid_phase");
  s.handle(msg(10, AddWaypoint{99, 0, 0}));
  EXPECT_EQ(last_error_code(), "unknown_drone");
  EXPECT_EQ(cap.last("error")["payload"]["in_reply_to"], 10);
  s.handle(msg(11, DeleteWaypoint{0, 0}));
  EXPECT_EQ(last_error_code(), "out_of_range");
  s.handle(msg(12, SetSpeed{3}));
  EXPECT_EQ(last_error_code(), "out_of_range");
  EXPECT_EQ(s.speed(), 1);
  s.handle(msg(13, SetSpeed{5}));
  EXPECT_EQ(s.speed(), 5);

  // Redundant pause/resume are no-ops, not errors.
  const auto errors_before = cap.of_type("error").size();
  s.handle(msg(14, Resume{}));
  s.handle(msg(15, Pause{}));
  s.handle(msg(16, Pause{}));
  EXPECT_EQ(s.phase(), Phase::Paused);
  EXPECT_EQ(cap.of_type("error").size(), errors_before);
}

TEST(Session, PauseFreezesTicks) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  s.handle(msg(1, Configure{mini_trial()}));
  s.handle(msg(2, Start{}));
  s.tick();
  s.handle(msg(3, Pause{}));
  const int t = s.runner()->state().tick;
  for (int i = 0; i < 5; ++i) s.tick();
  EXPECT_EQ(s.runner()->state().tick, t);
  s.handle(msg(4, Resume{}));
  s.tick();
  EXPECT_EQ(s.runner()->state().tick, t + 1);
}

TEST(Session, WaypointsOverrideAgentAndAreLogged) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  s.handle(msg(1, Configure{mini_trial(3)}));
  s.handle(msg(2, Start{}));
  const Vec2 far{-250, -250};
  s.handle(msg(3, AddWaypoint{0, far.x, far.y}));
  s.handle(msg(4, AddWaypoint{0, far.x + 1, far.y}));
  s.handle(msg(5, DeleteWaypoint{0, 1}));
  ASSERT_EQ(s.runner()->state().blue(0).waypoints.size(), 1u);
  s.tick();
  ASSERT_EQ(s.arbitration_log().size(), 1u);
  EXPECT_EQ(s.arbitration_log()[0][0], Controller::Human);
  EXPECT_EQ(s.arbitration_log()[0][1], Controller::Agent);
  s.broadcast_state();
  EXPECT_EQ(cap.last("state_update")["payload"]["blues"][0]["controller"], "human");
}

TEST(Session, ResolveActionDropsReachedWaypoints) {
  const WorldConfig cfg = WorldConfig::mini();
  WorldState world = spawn_scenario({ScenarioKind::Simple, 1}, cfg);
  BlueDrone d;
  d.position = {0, 0};
  d.heading = 0;
  d.waypoints = {{5, 0}, {0, 50}};
  HeuristicPolicy agent(cfg);
  agent.reset(world);
  Observation obs;
  const auto [action, who] = resolve_action(d, agent, obs, world, cfg);
  EXPECT_EQ(who, Controller::Human);
  EXPECT_EQ(action, ActionId::PositiveTurn);
  ASSERT_EQ(d.waypoints.size(), 1u);
  d.waypoints = {{1, 1}};
  EXPECT_EQ(resolve_action(d, agent, obs, world, cfg).second, Controller::Agent);
  EXPECT_TRUE(d.waypoints.empty());
}

TEST(Session, StopRecordsInterruptedEpisode) {
  const auto path = temp_path("stop.jsonl");
  std::filesystem::remove(path);
  {
    DemoWriter writer(path);
    Capture cap;
    Session s(WorldConfig{}, cap.sink(), &writer);
    TrialConfig c = mini_trial();
    c.participant = "p1";
    s.handle(msg(1, Configure{c}));
    s.handle(msg(2, Start{}));
    s.tick();
    s.tick();
    s.handle(msg(3, Stop{}));
    EXPECT_EQ(s.phase(), Phase::Ended);
    const json end = cap.last("episode_end")["payload"];
    EXPECT_EQ(end["interrupted"], true);
    EXPECT_EQ(end["recorded"], true);
    EXPECT_EQ(end["outcome"], "timeout");
    s.handle(msg(4, Stop{}));  // already ended: no-op
    EXPECT_TRUE(cap.of_type("error").empty());
    // A new Start plays the next seed.
    s.handle(msg(5, Start{}));
    EXPECT_EQ(s.runner()->state().scenario.seed, 2u);
    s.disconnect();
  }
  const DemoStore store = read_demo_store(path);
  std::filesystem::remove(path);
  ASSERT_EQ(store.episodes.size(), 2u);
  EXPECT_EQ(store.episodes[0].ticks, 2);
  EXPECT_EQ(store.episodes[0].participant, "p1");
  EXPECT_EQ(store.episodes[0].source, DemoSource::HumanDemo);
  EXPECT_FALSE(store.episodes[0].recorded_at.empty());
}

TEST(Session, SourceFollowsTrialSetup) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  TrialConfig c = mini_trial();
  c.human_involved = false;
  s.handle(msg(1, Configure{c}));
  s.handle(msg(2, Start{}));
  s.handle(msg(3, AddWaypoint{0, 1, 1}));
  EXPECT_EQ(cap.last("error")["payload"]["code"], "invalid_config");
  s.handle(msg(4, Stop{}));
  EXPECT_EQ(cap.last("episode_end")["payload"]["source"], "agent");

  const auto ck_path = temp_path("ck.json");
  nn::save_checkpoint(nn::fresh_checkpoint(1, 100.0f), ck_path);
  TrialConfig t = mini_trial();
  t.algorithm = AgentAlgorithm::Trained;
  t.checkpoint = ck_path;
  s.handle(msg(5, Configure{t}));
  s.handle(msg(6, Start{}));
  s.handle(msg(7, AddWaypoint{1, -200, 0}));
  s.tick();
  s.handle(msg(8, Stop{}));
  std::filesystem::remove(ck_path);
  EXPECT_EQ(cap.last("episode_end")["payload"]["source"], "pc");
  ASSERT_TRUE(s.last_demo().has_value());
  EXPECT_EQ(s.last_demo()->steps[0].controllers[1], Controller::Human);
  EXPECT_EQ(s.last_demo()->steps[0].controllers[0], Controller::Agent);
}

TEST(Session, CommandsApplyAtTickBoundary) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  s.enqueue(msg(1, Configure{mini_trial()}));
  s.enqueue(msg(2, Start{}));
  EXPECT_EQ(s.phase(), Phase::Configuring);
  s.apply_pending();
  EXPECT_EQ(s.phase(), Phase::Running);
}

TEST(Loop, PacingFollowsSpeedMultiplier) {
  Capture cap;
  Session s(WorldConfig{}, cap.sink());
  s.handle(msg(1, Configure{mini_trial()}));
  s.handle(msg(2, SetSpeed{2}));
  s.handle(msg(3, Start{}));
  LoopOptions opt;
  opt.pace_scale = 0.02;  // 20 ms per tick at 1x, 10 ms at 2x
  opt.idle_poll = std::chrono::milliseconds(1);
  std::atomic<bool> stop{false};
  std::thread loop([&] { run_session_loop(s, opt, stop); });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  stop = true;
  loop.join();
  const int ticks = s.runner()->state().tick;
  // ~20 ticks expected unless the episode ended first.
  if (s.phase() == Phase::Running || s.phase() == Phase::Paused) {
    EXPECT_GE(ticks, 12);
    EXPECT_LE(ticks, 22);
  } else {
    EXPECT_LE(ticks, 22);
  }
  EXPECT_FALSE(cap.of_type("state_update").empty());
}

TEST(Network, WebSocketSessionEndToEnd) {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  const auto record = temp_path("ws.jsonl");
  std::filesystem::remove(record);
  ServerOptions opt;
  opt.address = "127.0.0.1";
  opt.port = 0;
  opt.record_path = record;
  opt.loop.pace_scale = 0.005;
  TrialServer server(opt);
  server.start();
  ASSERT_NE(server.port(), 0);

  net::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/ws");
  ws.text(true);

  auto send = [&](const ClientMessage& m) { ws.write(net::buffer(client_message_to_json(m))); };
  auto read_until = [&](const std::string& type) {
    for (int i = 0; i < 5000; ++i) {
      beast::flat_buffer buf;
      ws.read(buf);
      const json j = json::parse(beast::buffers_to_string(buf.data()));
      if (j["type"] == type) return j;
    }
    return json();
  };

  send(msg(1, Configure{mini_trial(5)}));
  EXPECT_EQ(read_until("config_ack")["payload"]["in_reply_to"], 1);
  ws.write(net::buffer(std::string("{\"type\":\"warp\",\"seq\":2}")));
  EXPECT_EQ(read_until("error")["payload"]["code"], "parse");
  send(msg(3, Start{}));
  const json end = read_until("episode_end");
  ASSERT_FALSE(end.is_null());
  EXPECT_EQ(end["payload"]["recorded"], true);
  beast::error_code ec;
  ws.close(websocket::close_code::normal, ec);
  server.stop();

  const DemoStore store = read_demo_store(record);
  std::filesystem::remove(record);
  ASSERT_EQ(store.episodes.size(), 1u);
  EXPECT_EQ(replay_divergence(store.episodes[0]), 0.0);
}

TEST(Network, DisconnectPersistsRunningEpisode) {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  const auto record = temp_path("drop.jsonl");
  std::filesystem::remove(record);
  ServerOptions opt;
  opt.address = "127.0.0.1";
  opt.port = 0;
  opt.record_path = record;
  opt.loop.pace_scale = 10.0;  // effectively frozen
  TrialServer server(opt);
  server.start();
  {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
    ws.handshake("127.0.0.1", "/");
    ws.write(net::buffer(client_message_to_json(msg(1, Configure{mini_trial()}))));
    ws.write(net::buffer(client_message_to_json(msg(2, Start{}))));
    for (;;) {
      beast::flat_buffer buf;
      ws.read(buf);
      const json j = json::parse(beast::buffers_to_string(buf.data()));
      if (j["type"] == "state_update" && j["payload"]["phase"] == "running") break;
    }
    ws.next_layer().close();
  }
  for (int i = 0; i < 200 && !std::filesystem::exists(record); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  server.stop();
  const DemoStore store = read_demo_store(record);
  std::filesystem::remove(record);
  ASSERT_EQ(store.episodes.size(), 1u);
  EXPECT_EQ(store.episodes[0].outcome, Outcome::Timeout);
}

TEST(Network, ServesStaticFiles) {
  namespace beast = boost::beast;
  namespace http = beast::http;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  const auto root = std::filesystem::temp_directory_path() / "adf_srv_web";
  std::filesystem::create_directories(root);
  std::ofstream(root / "index.html") << "<html>ok</html>";
  ServerOptions opt;
  opt.address = "127.0.0.1";
  opt.port = 0;
  opt.web_root = root.string();
  TrialServer server(opt);
  server.start();

  auto get = [&](const std::string& target) {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    tcp::socket sock(ioc);
    net::connect(sock, resolver.resolve("127.0.0.1", std::to_string(server.port())));
    http::request<http::empty_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "127.0.0.1");
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    return res;
  };
  const auto ok = get("/");
  EXPECT_EQ(ok.result(), http::status::ok);
  EXPECT_EQ(ok.body(), "<html>ok</html>");
  EXPECT_EQ(ok[http::field::content_type], "text/html");
  EXPECT_EQ(get("/../etc/passwd").result(), http::status::not_found);
  EXPECT_EQ(get("/missing.js").result(), http::status::not_found);
  server.stop();
  std::filesystem::remove_all(root);
}

TEST(Network, PortFromEnvironment) {
  ::setenv("ADF_PORT", "9123", 1);
  EXPECT_EQ(port_from_env(8080), 9123);
  ::setenv("ADF_PORT", "nope", 1);
  EXPECT_EQ(port_from_env(8080), 8080);
  ::unsetenv("ADF_PORT");
  EXPECT_EQ(port_from_env(8080), 8080);
}
