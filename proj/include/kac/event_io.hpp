// JSON-lines serialization of event logs: one header line, then one event per line.
//   {"n":N,"E":total,"T":horizon,"seed":u64,"kernel":"base", "initial":[...]}
//   {"t":0.25,"i":3,"j":7,"in":[1,1],"out":[0,2]}

#ifndef KAC_EVENT_IO_HPP
#define KAC_EVENT_IO_HPP

#include <iosfwd>
#include <optional>
#include <string>

#include "kac/simulator.hpp"

namespace kac {

std::string event_to_json_line(const Event& ev);
Event event_from_json_line(const std::string& line);

/// Writes header and events. `initial` is echoed into the header when given;
/// `meta`, a JSON object, is stored under "meta" and ignored on reading.
void write_event_log(std::ostream& os, const EventLog& log, const Configuration* initial = nullptr,
                     const std::string& meta = {});

struct LoadedEventLog {
  EventLog log;
  std::optional<Configuration> initial;
};

LoadedEventLog read_event_log(std::istream& is);

}  // namespace kac

#endif  // KAC_EVENT_IO_HPP
