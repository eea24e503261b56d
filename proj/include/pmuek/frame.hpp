#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pmuek {

enum class Status { Ok, Test, Malfunction, Unknown };

const char* status_to_string(Status s);      // OK / TEST / MALF / UNK
Status status_from_string(const std::string& s);

// The three signals extracted for detection and classification.
enum class SignalKind : int { VmPos = 0, ImPos = 1, Rocof = 2 };

inline constexpr std::array<SignalKind, 3> kAllSignals = {
    SignalKind::VmPos, SignalKind::ImPos, SignalKind::Rocof};
inline constexpr int kNumSignals = 3;

const char* signal_to_string(SignalKind s);  // vm_pos / im_pos / rocof
SignalKind signal_from_string(const std::string& s);

// One timestamped record from one PMU. Missing fields are empty optionals;
// there is no sentinel magnitude.
struct PmuFrame {
  std::int64_t ts_ms = 0;
  std::string pmu_id;

  std::optional<double> vm_pos, va_pos, im_pos, ia_pos;
  std::optional<double> vm_a, va_a, vm_b, va_b, vm_c, va_c;
  std::optional<double> im_a, ia_a, im_b, ia_b, im_c, ia_c;
  std::optional<double> freq, rocof;
  Status status = Status::Unknown;

  std::optional<double> signal(SignalKind s) const {
    switch (s) {
      case SignalKind::VmPos: return vm_pos;
      case SignalKind::ImPos: return im_pos;
      case SignalKind::Rocof: return rocof;
    }
    return std::nullopt;
  }

  void set_signal(SignalKind s, std::optional<double> v) {
    switch (s) {
      case SignalKind::VmPos: vm_pos = v; break;
      case SignalKind::ImPos: im_pos = v; break;
      case SignalKind::Rocof: rocof = v; break;
    }
  }

  bool operator==(const PmuFrame&) const = default;
};

// Column order of the frame file. 21 columns: timestamp, PMU id, 18 numeric
// measurement fields, status flag.
extern const std::array<const char*, 21> kFrameColumns;
std::string frame_file_header();

// One CSV line (no trailing newline) <-> frame. Numeric fields are written
// with shortest round-trip formatting, so parse(serialize(f)) == f bit-exact.
PmuFrame parse_frame(const std::string& line);
std::string serialize_frame(const PmuFrame& frame);

// Whole-file helpers. Readers validate the header row.
std::vector<PmuFrame> read_frames(const std::string& path);
void write_frames(const std::string& path, const std::vector<PmuFrame>& frames);

// Streaming access for large files.
class FrameReader {
 public:
  explicit FrameReader(const std::string& path);
  ~FrameReader();
  FrameReader(const FrameReader&) = delete;
  FrameReader& operator=(const FrameReader&) = delete;

  // Returns false at end of file.
  bool next(PmuFrame& out);

 private:
  struct Impl;
  Impl* impl_;
};

class FrameWriter {
 public:
  explicit FrameWriter(const std::string& path);
  ~FrameWriter();
  FrameWriter(const FrameWriter&) = delete;
  FrameWriter& operator=(const FrameWriter&) = delete;

  void write(const PmuFrame& frame);
  void flush();

 private:
  struct Impl;
  Impl* impl_;
};

// ----- Event log ------------------------------------------------------------

enum class EventType { LineOutage, TransformerOutage, FrequencyEvent };
enum class EventSource { GroundTruth, DegradedLog, Detected };

const char* event_type_to_string(EventType t);
EventType event_type_from_string(const std::string& s);
const char* event_source_to_string(EventSource s);
EventSource event_source_from_string(const std::string& s);

struct EventRecord {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  EventType event_type = EventType::LineOutage;
  std::string cause;
  EventSource source = EventSource::GroundTruth;

  bool operator==(const EventRecord&) const = default;
};

// JSON array with ISO-8601 timestamps.
std::vector<EventRecord> read_event_log(const std::string& path);
void write_event_log(const std::string& path, const std::vector<EventRecord>& events);
std::string event_log_to_json(const std::vector<EventRecord>& events);
std::vector<EventRecord> event_log_from_json(const std::string& json_text);

}  // namespace pmuek
