#include "pmuek/frame.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pmuek/errors.hpp"
#include "pmuek/timeutil.hpp"

namespace pmuek {

const std::array<const char*, 21> kFrameColumns = {
    "ts_ms", "pmu_id", "vm_pos", "va_pos", "im_pos", "ia_pos", "vm_a",
    "va_a",  "vm_b",   "va_b",   "vm_c",   "va_c",   "im_a",   "ia_a",
    "im_b",  "ia_b",   "im_c",   "ia_c",   "freq",   "rocof",  "status"};

const char* status_to_string(Status s) {
  switch (s) {
    case Status::Ok: return "OK";
    case Status::Test: return "TEST";
    case Status::Malfunction: return "MALF";
    case Status::Unknown: return "UNK";
  }
  return "UNK";
}

Status status_from_string(const std::string& s) {
  if (s == "OK") return Status::Ok;
  if (s == "TEST") return Status::Test;
  if (s == "MALF") return Status::Malfunction;
  if (s == "UNK") return Status::Unknown;
  throw IoError("unknown status flag '" + s + "'");
}

const char* signal_to_string(SignalKind s) {
  switch (s) {
    case SignalKind::VmPos: return "vm_pos";
    case SignalKind::ImPos: return "im_pos";
    case SignalKind::Rocof: return "rocof";
  }
  return "vm_pos";
}

SignalKind signal_from_string(const std::string& s) {
  if (s == "vm_pos") return SignalKind::VmPos;
  if (s == "im_pos") return SignalKind::ImPos;
  if (s == "rocof") return SignalKind::Rocof;
  throw ContractError("unknown signal kind '" + s + "'");
}

std::string frame_file_header() {
  std::string out;
  for (std::size_t i = 0; i < kFrameColumns.size(); ++i) {
    if (i) out += ',';
    out += kFrameColumns[i];
  }
  return out;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::optional<double> parse_field(std::string_view field, std::size_t col) {
  if (field.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError(std::string("malformed numeric field in column '") + kFrameColumns[col] + "'");
  }
  return v;
}

// Splits one CSV line into exactly 21 fields (no quoting in this format).
std::array<std::string_view, 21> split_line(const std::string& line) {
  std::array<std::string_view, 21> fields;
  std::size_t start = 0;
  std::size_t idx = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (idx >= fields.size()) throw IoError("too many columns in frame line");
      fields[idx++] = std::string_view(line).substr(start, i - start);
      start = i + 1;
    }
  }
  if (idx != fields.size()) {
    throw IoError("expected 21 columns in frame line, got " + std::to_string(idx));
  }
  return fields;
}

}  // namespace

PmuFrame parse_frame(const std::string& line) {
  auto f = split_line(line);
  PmuFrame frame;
  {
    std::int64_t ts = 0;
    auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), ts);
    if (res.ec != std::errc() || res.ptr != f[0].data() + f[0].size()) {
      throw IoError("malformed timestamp in column 'ts_ms'");
    }
    frame.ts_ms = ts;
  }
  if (f[1].empty()) throw IoError("empty column 'pmu_id'");
  frame.pmu_id = std::string(f[1]);

  frame.vm_pos = parse_field(f[2], 2);
  frame.va_pos = parse_field(f[3], 3);
  frame.im_pos = parse_field(f[4], 4);
  frame.ia_pos = parse_field(f[5], 5);
  frame.vm_a = parse_field(f[6], 6);
  frame.va_a = parse_field(f[7], 7);
  frame.vm_b = parse_field(f[8], 8);
  frame.va_b = parse_field(f[9], 9);
  frame.vm_c = parse_field(f[10], 10);
  frame.va_c = parse_field(f[11], 11);
  frame.im_a = parse_field(f[12], 12);
  frame.ia_a = parse_field(f[13], 13);
  frame.im_b = parse_field(f[14], 14);
  frame.ia_b = parse_field(f[15], 15);
  frame.im_c = parse_field(f[16], 16);
  frame.ia_c = parse_field(f[17], 17);
  frame.freq = parse_field(f[18], 18);
  frame.rocof = parse_field(f[19], 19);
  frame.status = status_from_string(std::string(f[20]));
  return frame;
}

std::string serialize_frame(const PmuFrame& frame) {
  std::string out;
  out.reserve(160);
  out += std::to_string(frame.ts_ms);
  out += ',';
  out += frame.pmu_id;
  const std::optional<double>* fields[] = {
      &frame.vm_pos, &frame.va_pos, &frame.im_pos, &frame.ia_pos, &frame.vm_a, &frame.va_a,
      &frame.vm_b,   &frame.va_b,   &frame.vm_c,   &frame.va_c,   &frame.im_a, &frame.ia_a,
      &frame.im_b,   &frame.ia_b,   &frame.im_c,   &frame.ia_c,   &frame.freq, &frame.rocof};
  for (const auto* field : fields) {
    out += ',';
    if (field->has_value()) append_double(out, **field);
  }
  out += ',';
  out += status_to_string(frame.status);
  return out;
}

// ----- file I/O --------------------------------------------------------------

struct FrameReader::Impl {
  std::ifstream in;
  std::string line;
};

FrameReader::FrameReader(const std::string& path) : impl_(new Impl) {
  impl_->in.open(path);
  if (!impl_->in) {
    delete impl_;
    throw IoError("cannot open frame file '" + path + "'");
  }
  std::string header;
  if (!std::getline(impl_->in, header)) {
    delete impl_;
    throw IoError("empty frame file '" + path + "'");
  }
  if (header != frame_file_header()) {
    delete impl_;
    throw IoError("frame file '" + path + "' has an unexpected header row");
  }
}

FrameReader::~FrameReader() { delete impl_; }

bool FrameReader::next(PmuFrame& out) {
  while (std::getline(impl_->in, impl_->line)) {
    if (impl_->line.empty()) continue;
    out = parse_frame(impl_->line);
    return true;
  }
  return false;
}

struct FrameWriter::Impl {
  std::ofstream out;
};

FrameWriter::FrameWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw IoError("cannot create frame file '" + path + "'");
  }
  impl_->out << frame_file_header() << '\n';
}

FrameWriter::~FrameWriter() { delete impl_; }

void FrameWriter::write(const PmuFrame& frame) { impl_->out << serialize_frame(frame) << '\n'; }

void FrameWriter::flush() { impl_->out.flush(); }

std::vector<PmuFrame> read_frames(const std::string& path) {
  FrameReader reader(path);
  std::vector<PmuFrame> frames;
  PmuFrame f;
  while (reader.next(f)) frames.push_back(std::move(f));
  return frames;
}

void write_frames(const std::string& path, const std::vector<PmuFrame>& frames) {
  FrameWriter writer(path);
  for (const auto& f : frames) writer.write(f);
}

// ----- event log -------------------------------------------------------------

const char* event_type_to_string(EventType t) {
  switch (t) {
    case EventType::LineOutage: return "LineOutage";
    case EventType::TransformerOutage: return "TransformerOutage";
    case EventType::FrequencyEvent: return "FrequencyEvent";
  }
  return "LineOutage";
}

EventType event_type_from_string(const std::string& s) {
  if (s == "LineOutage") return EventType::LineOutage;
  if (s == "TransformerOutage") return EventType::TransformerOutage;
  if (s == "FrequencyEvent") return EventType::FrequencyEvent;
  throw IoError("unknown event type '" + s + "'");
}

const char* event_source_to_string(EventSource s) {
  switch (s) {
    case EventSource::GroundTruth: return "GroundTruth";
    case EventSource::DegradedLog: return "DegradedLog";
    case EventSource::Detected: return "Detected";
  }
  return "GroundTruth";
}

EventSource event_source_from_string(const std::string& s) {
  if (s == "GroundTruth") return EventSource::GroundTruth;
  if (s == "DegradedLog") return EventSource::DegradedLog;
  if (s == "Detected") return EventSource::Detected;
  throw IoError("unknown event source '" + s + "'");
}

std::string event_log_to_json(const std::vector<EventRecord>& events) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : events) {
    if (e.start_ms > e.end_ms) throw ContractError("event record with start > end");
    arr.push_back({{"start", ms_to_iso8601(e.start_ms)},
                   {"end", ms_to_iso8601(e.end_ms)},
                   {"event_type", event_type_to_string(e.event_type)},
                   {"cause", e.cause},
                   {"source", event_source_to_string(e.source)}});
  }
  return arr.dump(2) + "\n";
}

std::vector<EventRecord> event_log_from_json(const std::string& json_text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid event log JSON: ") + e.what());
  }
  if (!arr.is_array()) throw IoError("event log must be a JSON array");
  std::vector<EventRecord> events;
  events.reserve(arr.size());
  for (const auto& item : arr) {
    EventRecord e;
    e.start_ms = iso8601_to_ms(item.at("start").get<std::string>());
    e.end_ms = iso8601_to_ms(item.at("end").get<std::string>());
    e.event_type = event_type_from_string(item.at("event_type").get<std::string>());
    e.cause = item.value("cause", std::string());
    e.source = event_source_from_string(item.at("source").get<std::string>());
    if (e.start_ms > e.end_ms) throw IoError("event log record with start > end");
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<EventRecord> read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event log '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return event_log_from_json(ss.str());
}

void write_event_log(const std::string& path, const std::vector<EventRecord>& events) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create event log '" + path + "'");
  out << event_log_to_json(events);
}

}  // namespace pmuek
