#include "kac/event_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "kac/errors.hpp"

namespace kac {

namespace {

// Shortest round-trip representation, so parsing returns the identical double.
std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string event_to_json_line(const Event& ev) {
  std::string s;
  s.reserve(80);
  s += "{\"t\":";
  s += format_double(ev.t);
  s += ",\"i\":" + std::to_string(ev.i);
  s += ",\"j\":" + std::to_string(ev.j);
  s += ",\"in\":[" + std::to_string(ev.in.lo) + "," + std::to_string(ev.in.hi) + "]";
  s += ",\"out\":[" + std::to_string(ev.out.lo) + "," + std::to_string(ev.out.hi) + "]}";
  return s;
}

Event event_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Event ev;
    ev.t = j.at("t").get<double>();
    ev.i = j.at("i").get<Index>();
    ev.j = j.at("j").get<Index>();
    const auto& in = j.at("in");
    const auto& out = j.at("out");
    ev.in = EnergyPair(in.at(0).get<Energy>(), in.at(1).get<Energy>());
    ev.out = EnergyPair(out.at(0).get<Energy>(), out.at(1).get<Energy>());
    if (ev.in.lo < 0 || ev.out.lo < 0) throw CorruptionError("negative energy in event");
    return ev;
  } catch (const nlohmann::json::exception& err) {
    throw CorruptionError(std::string("malformed event line: ") + err.what());
  }
}

void write_event_log(std::ostream& os, const EventLog& log, const Configuration* initial, const std::string& meta) {
  nlohmann::ordered_json header;
  header["n"] = log.n();
  header["E"] = log.e_total();
  header["T"] = log.horizon();
  header["seed"] = log.seed();
  header["kernel"] = log.kernel();
  if (initial != nullptr) {
    header["initial"] = std::vector<Energy>(initial->energies().begin(), initial->energies().end());
  }
  if (!meta.empty()) header["meta"] = nlohmann::ordered_json::parse(meta);
  os << header.dump() << '\n';
  log.for_each([&](const Event& ev) { os << event_to_json_line(ev) << '\n'; });
}

LoadedEventLog read_event_log(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw CorruptionError("empty event log");
  LoadedEventLog out;
  try {
    const auto h = nlohmann::json::parse(line);
    out.log = EventLog(h.at("n").get<std::size_t>(), h.at("E").get<Energy>(), h.at("T").get<double>(),
                       h.at("seed").get<std::uint64_t>(), h.at("kernel").get<std::string>());
    if (h.contains("initial")) out.initial = Configuration(h.at("initial").get<std::vector<Energy>>());
  } catch (const nlohmann::json::exception& err) {
    throw CorruptionError(std::string("malformed event log header: ") + err.what());
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.log.append(event_from_json_line(line));
  }
  return out;
}

}  // namespace kac
