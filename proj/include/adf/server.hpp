#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "adf/demos.hpp"
#include "adf/env.hpp"
#include "adf/learner.hpp"

namespace adf {

enum class AgentAlgorithm { Trained, Heuristic, Random };

std::string to_string(AgentAlgorithm a);
AgentAlgorithm parse_agent_algorithm(const std::string& s);

struct TrialConfig {
  ScenarioSpec scenario;
  bool mini = false;  // start from WorldConfig::mini() instead of the server's world
  int blue_count = 5;
  std::vector<Pose> blue_starts;
  std::vector<Vec2> red_route;
  AgentAlgorithm algorithm = AgentAlgorithm::Heuristic;
  std::string checkpoint;  // required for Trained
  bool human_involved = true;
  double update_frequency = 10.0;  // state broadcasts per wall second
  bool reveal_red = false;         // stream the red position even when undetected
  std::string participant;

  // Throws InvalidConfig; Io when a Trained checkpoint path does not exist.
  void validate() const;
};

enum class Phase { Configuring, Running, Paused, Ended };
std::string to_string(Phase p);

struct AddWaypoint {
  int drone_id = 0;
  double x = 0, y = 0;
};
struct DeleteWaypoint {
  int drone_id = 0;
  int waypoint_index = 0;
};
struct Pause {};
struct Resume {};
struct SetSpeed {
  int multiplier = 1;
};
struct Configure {
  TrialConfig config;
};
struct Start {};
struct Stop {};

using ControlCommand = std::variant<AddWaypoint, DeleteWaypoint, Pause, Resume, SetSpeed, Configure, Start, Stop>;

struct ClientMessage {
  std::int64_t seq = 0;
  ControlCommand command;
};

// {type, seq, payload} envelope. Throws Parse for malformed JSON or unknown types.
ClientMessage parse_client_message(const std::string& text);
std::string client_message_to_json(const ClientMessage& msg);

std::string error_message(std::int64_t seq, std::int64_t in_reply_to, ErrorCode code, const std::string& text);

// Drone-level arbitration: waypoints already reached (within one tick of travel) are
// dropped; a remaining waypoint wins over the agent.
std::pair<ActionId, Controller> resolve_action(BlueDrone& drone, Policy& agent, const Observation& obs,
                                               const WorldState& world, const WorldConfig& cfg);

// One operator session. Only the owning loop calls tick(); other threads hand commands
// over with enqueue(), and they are applied by apply_pending() at the next tick boundary.
class Session {
 public:
  using Sink = std::function<void(const std::string&)>;

  Session(WorldConfig base_world, Sink sink, DemoWriter* recorder = nullptr);

  void enqueue(ClientMessage msg);
  void apply_pending();

  // Validates and applies one command immediately; failures emit an error message and
  // leave the session unchanged.
  void handle(const ClientMessage& msg);

  void tick();
  void disconnect();
  void broadcast_state();

  Phase phase() const { return phase_; }
  int speed() const { return speed_; }
  const TrialConfig& config() const { return config_; }
  const WorldConfig& world_config() const { return world_; }
  const EpisodeRunner* runner() const { return runner_.get(); }
  int wins() const { return wins_; }
  int losses() const { return losses_; }
  const std::vector<std::vector<Controller>>& arbitration_log() const { return log_; }
  const std::optional<Demonstration>& last_demo() const { return last_demo_; }

  std::string state_json() const;

 private:
  void emit(const std::string& type, nlohmann::json payload);
  void fail(std::int64_t in_reply_to, ErrorCode code, const std::string& text);
  void start_episode();
  void finish_episode(bool interrupted);

  WorldConfig base_world_;
  WorldConfig world_;
  Sink sink_;
  DemoWriter* recorder_;
  std::mutex queue_mu_;
  std::deque<ClientMessage> queue_;

  Phase phase_ = Phase::Configuring;
  int speed_ = 1;
  TrialConfig config_;
  std::unique_ptr<Policy> agent_;
  std::unique_ptr<EpisodeRunner> runner_;
  std::vector<std::vector<Controller>> log_;
  std::optional<Demonstration> last_demo_;
  int episode_index_ = 0;
  int wins_ = 0, losses_ = 0;
  std::int64_t out_seq_ = 0;
};

struct LoopOptions {
  double pace_scale = 1.0;  // wall seconds per simulated second
  std::chrono::milliseconds idle_poll{5};
};

// Drives a session in wall time: a tick every tick_seconds * pace_scale / speed, state
// broadcasts at the trial's update frequency. Returns when `stop` becomes true.
void run_session_loop(Session& session, const LoopOptions& options, const std::atomic<bool>& stop,
                      const std::function<void()>& poll_io = {});

struct ServerOptions {
  std::string address = "0.0.0.0";
  unsigned short port = 8080;  // 0 picks a free port
  std::string web_root;        // static files; empty disables file serving
  std::string record_path;     // demo JSONL sink; empty disables recording
  WorldConfig world;
  LoopOptions loop;
};

// Port from ADF_PORT when set and valid, else `fallback`.
unsigned short port_from_env(unsigned short fallback);

// WebSocket endpoint (any path with an Upgrade header) plus static file serving.
class TrialServer {
 public:
  explicit TrialServer(ServerOptions options);
  ~TrialServer();
  TrialServer(const TrialServer&) = delete;
  TrialServer& operator=(const TrialServer&) = delete;

  void start();
  // Ends every session (persisting interrupted episodes) and joins the threads.
  void stop();
  unsigned short port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace adf
