#include "experior/domain.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace experior {

using nlohmann::json;

EnvSignature EnvSignature::bandit(int num_arms) {
  EnvSignature s;
  s.family = EnvFamily::BernoulliBandit;
  s.size = num_arms;
  s.num_actions = num_arms;
  return s;
}

EnvSignature EnvSignature::deep_sea(int grid_size) {
  EnvSignature s;
  s.family = EnvFamily::DeepSea;
  s.size = grid_size;
  s.num_actions = 2;
  return s;
}

EnvSignature EnvSignature::linear(int num_contexts, int actions, int dim) {
  EnvSignature s;
  s.family = EnvFamily::LinearBandit;
  s.size = num_contexts;
  s.num_actions = actions;
  s.feature_dim = dim;
  return s;
}

std::string EnvSignature::to_string() const {
  switch (family) {
    case EnvFamily::BernoulliBandit:
      return "bandit:" + std::to_string(size);
    case EnvFamily::DeepSea:
      return "deepsea:" + std::to_string(size);
    case EnvFamily::LinearBandit:
      return "linear:" + std::to_string(size) + "x" +
             std::to_string(num_actions) + "x" + std::to_string(feature_dim);
  }
  throw std::logic_error("unreachable");
}

EnvSignature EnvSignature::parse(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("bad env signature: " + text);
  const std::string kind = text.substr(0, colon);
  const std::string rest = text.substr(colon + 1);
  auto to_int = [&](const std::string& s) {
    size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size() || v <= 0)
      throw std::invalid_argument("bad env signature: " + text);
    return v;
  };
  if (kind == "bandit") return bandit(to_int(rest));
  if (kind == "deepsea") return deep_sea(to_int(rest));
  if (kind == "linear") {
    auto x1 = rest.find('x');
    auto x2 = rest.find('x', x1 == std::string::npos ? x1 : x1 + 1);
    if (x1 == std::string::npos || x2 == std::string::npos)
      throw std::invalid_argument("bad env signature: " + text);
    return linear(to_int(rest.substr(0, x1)),
                  to_int(rest.substr(x1 + 1, x2 - x1 - 1)),
                  to_int(rest.substr(x2 + 1)));
  }
  throw std::invalid_argument("unknown env family: " + kind);
}

namespace {

// Per-family bounds used by validate_dataset.
struct Ranges {
  int max_state;     // exclusive, for step states
  int max_action;    // exclusive
  int max_terminal;  // exclusive
};

Ranges ranges_for(const EnvSignature& sig) {
  switch (sig.family) {
    case EnvFamily::BernoulliBandit:
      return {1, sig.size, 1};
    case EnvFamily::DeepSea:
      // In-grid states are row*M+col for row<M; terminal ids are M*M+col.
      return {sig.size * sig.size, 2, sig.size * sig.size + sig.size};
    case EnvFamily::LinearBandit:
      return {sig.size, sig.num_actions, sig.size};
  }
  throw std::logic_error("unreachable");
}

}  // namespace

ValidationReport validate_dataset(const DemoDataset& demos,
                                  const EnvSignature& sig) {
  ValidationReport report;
  auto fail = [&](const std::string& msg) {
    report.ok = false;
    report.errors.push_back(msg);
  };

  if (demos.env_signature != sig.to_string())
    fail("env signature mismatch: dataset has '" + demos.env_signature +
         "', expected '" + sig.to_string() + "'");
  if (demos.horizon < 1) fail("horizon must be >= 1");
  if (sig.family == EnvFamily::BernoulliBandit && demos.horizon != 1)
    fail("bandit datasets must have horizon 1");
  if (sig.family == EnvFamily::DeepSea && demos.horizon != sig.size)
    fail("deep sea horizon must equal the grid size " +
         std::to_string(sig.size));

  const Ranges r = ranges_for(sig);
  for (size_t i = 0; i < demos.trajectories.size(); ++i) {
    const Trajectory& traj = demos.trajectories[i];
    const std::string at = "trajectory " + std::to_string(i) + ": ";
    if (traj.horizon() != demos.horizon) {
      fail(at + "has " + std::to_string(traj.horizon()) +
           " steps, expected " + std::to_string(demos.horizon));
      continue;
    }
    for (int h = 0; h < traj.horizon(); ++h) {
      const TrajectoryStep& st = traj.steps[static_cast<size_t>(h)];
      if (st.state < 0 || st.state >= r.max_state)
        fail(at + "state " + std::to_string(st.state) + " out of range [0," +
             std::to_string(r.max_state) + ")");
      if (st.action < 0 || st.action >= r.max_action)
        fail(at + "action " + std::to_string(st.action) +
             " >= K=" + std::to_string(r.max_action));
      if (sig.family == EnvFamily::DeepSea && st.state >= 0 &&
          st.state < r.max_state && st.state / sig.size != h)
        fail(at + "state " + std::to_string(st.state) + " at step " +
             std::to_string(h) + " is not in row " + std::to_string(h));
    }
    if (traj.terminal_state < 0 || traj.terminal_state >= r.max_terminal)
      fail(at + "terminal state " + std::to_string(traj.terminal_state) +
           " out of range [0," + std::to_string(r.max_terminal) + ")");
    if (sig.family == EnvFamily::DeepSea &&
        traj.terminal_state < sig.size * sig.size)
      fail(at + "terminal state " + std::to_string(traj.terminal_state) +
           " is not in the bottom row");
  }

  report.empty = demos.trajectories.empty();
  return report;
}

std::string write_demo_text(const DemoDataset& demos) {
  std::ostringstream out;
  json header;
  header["env"] = demos.env_signature;
  header["horizon"] = demos.horizon;
  out << header.dump() << "\n";
  for (const Trajectory& traj : demos.trajectories) {
    json line;
    json steps = json::array();
    for (const TrajectoryStep& st : traj.steps)
      steps.push_back(json::array({st.state, st.action}));
    line["steps"] = std::move(steps);
    line["terminal"] = traj.terminal_state;
    out << line.dump() << "\n";
  }
  return out.str();
}

DemoDataset read_demo_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("demo data is empty (missing header line)");
  json header = json::parse(line);
  if (!header.contains("env") || !header.contains("horizon"))
    throw std::runtime_error("demo header must carry 'env' and 'horizon'");

  DemoDataset demos;
  demos.env_signature = header.at("env").get<std::string>();
  demos.horizon = header.at("horizon").get<int>();

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line);
    Trajectory traj;
    for (const auto& step : j.at("steps")) {
      if (!step.is_array() || step.size() != 2)
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": each step must be a [state,action] pair");
      traj.steps.push_back({step[0].get<int>(), step[1].get<int>()});
    }
    // "terminal" may be omitted for one-step (bandit) trajectories.
    traj.terminal_state = j.value("terminal", 0);
    demos.trajectories.push_back(std::move(traj));
  }
  return demos;
}

void write_demo_file(const DemoDataset& demos, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << write_demo_text(demos);
}

DemoDataset read_demo_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_demo_text(buf.str());
}

std::string hash_bytes(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace experior
