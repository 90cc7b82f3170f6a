#include <fstream>
#include <istream>
#include <ostream>

#include "olla/engine.hpp"

namespace olla {

void RunLog::write(std::ostream& out) const {
  for (const auto& ev : events) out << ev.dump() << '\n';
}

void RunLog::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::parameter, "cannot write run log '" + path + "'");
  write(out);
}

RunLog RunLog::read(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto ev = nlohmann::ordered_json::parse(line);
      if (!ev.is_object() || !ev.contains("event")) throw RowError(line_no, "run log entry has no event type");
      log.events.push_back(std::move(ev));
    } catch (const nlohmann::json::exception& e) {
      throw RowError(line_no, std::string("malformed run log entry: ") + e.what());
    }
  }
  return log;
}

RunLog RunLog::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::parameter, "cannot open run log '" + path + "'");
  return read(in);
}

std::vector<ProgressiveEstimate> RunLog::emissions() const {
  std::vector<ProgressiveEstimate> out;
  for (const auto& ev : events) {
    if (ev.at("event") == "estimate") out.push_back(estimate_from_json(ev));
  }
  return out;
}

RunState RunLog::state() const {
  if (auto end = first("end")) return parse_run_state(end->at("state").get<std::string>());
  return RunState::running;
}

std::optional<nlohmann::ordered_json> RunLog::first(const std::string& event) const {
  for (const auto& ev : events) {
    if (ev.at("event") == event) return ev;
  }
  return std::nullopt;
}

}  // namespace olla
