#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cogemm/predictor.hpp"
#include "cogemm/tuner.hpp"

namespace cogemm {

// Picoseconds. Timeline arithmetic is integral so sums are exact.
using Picos = std::int64_t;

Picos to_picos(double seconds);
double to_seconds(Picos ps);

struct GemmWork {
  GemmShape shape;
  bool operator==(const GemmWork&) const = default;
};

struct NonGemmWork {
  double runtime_s = 0.0;
  bool operator==(const NonGemmWork&) const = default;
};

struct KoRef {
  KernelId kernel = 0;
  KernelFeatures features;
  bool operator==(const KoRef&) const = default;
};

inline constexpr std::size_t kMaxKernelsPerPacket = 3;

struct KernelPacket {
  std::uint64_t id = 0;
  std::variant<GemmWork, NonGemmWork> work;
  // CD -> kernel object. At most kMaxKernelsPerPacket distinct kernels.
  std::map<int, KoRef> ko_map;
  std::optional<KernelId> selected_ko;
  std::vector<std::uint8_t> header;

  bool is_gemm() const { return std::holds_alternative<GemmWork>(work); }
  const GemmShape& shape() const;
  double non_gemm_runtime_s() const;
  std::size_t distinct_kernels() const;
  void validate() const;

  bool operator==(const KernelPacket&) const = default;
};

// A GEMM packet carrying every per-CD kernel the library holds for its
// shape; the map is empty for shapes the library lacks.
KernelPacket make_gemm_packet(std::uint64_t id, const GemmShape& shape, const GoLibrary& lib);
KernelPacket make_non_gemm_packet(std::uint64_t id, double runtime_s);

inline constexpr std::size_t kMaxQueues = 32;

class QueueSet {
 public:
  explicit QueueSet(std::size_t num_queues);

  std::size_t size() const { return queues_.size(); }
  void push(std::size_t queue, KernelPacket packet);
  const KernelPacket* head(std::size_t queue) const;
  KernelPacket& mutable_head(std::size_t queue);
  KernelPacket pop(std::size_t queue);
  bool empty() const;
  std::size_t pending() const;

 private:
  std::vector<std::deque<KernelPacket>> queues_;
};

struct Candidate {
  std::size_t queue = 0;
  GemmShape shape;
  bool operator==(const Candidate&) const = default;
};

// GEMM heads in queue order.
std::vector<Candidate> inspect_heads(const QueueSet& qs);

// Largest supported CD not above min(predicted, available); 1 when either is below 1.
int effective_cd(int predicted, int available);

class CdChooser {
 public:
  virtual ~CdChooser() = default;
  // Raw CD preference for a homogeneous group; decide() applies the min rule.
  virtual int choose(const GemmShape& shape, int available, const GoLibrary& lib) const = 0;
};

class FixedChooser final : public CdChooser {
 public:
  explicit FixedChooser(int cd) : cd_(cd) {}
  int choose(const GemmShape&, int, const GoLibrary&) const override { return cd_; }

 private:
  int cd_;
};

class ModelChooser final : public CdChooser {
 public:
  explicit ModelChooser(CdPredictor model) : model_(std::move(model)) {}
  int choose(const GemmShape& shape, int available, const GoLibrary& lib) const override;

 private:
  CdPredictor model_;
};

struct CpTiming {
  double clock_hz = 1.5e9;
  int mem_latency_cycles = 31;
  double queue_rw_s = 0.32e-6;
  double total_decision_s = 8e-6;

  void validate() const;
  bool operator==(const CpTiming&) const = default;
};

void to_json(nlohmann::json& j, const CpTiming& t);
void from_json(const nlohmann::json& j, CpTiming& t);

// Per-shape CD table; shapes not listed get `fallback`.
class MapChooser final : public CdChooser {
 public:
  explicit MapChooser(std::map<GemmShape, int> cds, int fallback = 1) : cds_(std::move(cds)), fallback_(fallback) {}
  int choose(const GemmShape& shape, int available, const GoLibrary& lib) const override;

 private:
  std::map<GemmShape, int> cds_;
  int fallback_;
};

struct ScheduleGroup {
  GemmShape shape;
  int cd = 1;
  std::size_t available = 0;
  std::vector<std::size_t> queues;  // the cd lowest queue ids of the group
  bool in_library = true;

  bool operator==(const ScheduleGroup&) const = default;
};

struct ScheduleDecision {
  std::vector<ScheduleGroup> groups;  // largest group first, then by shape
};

ScheduleDecision decide(std::span<const Candidate> candidates, const GoLibrary& lib, const CdChooser& chooser);

struct DispatchEvent {
  std::size_t queue = 0;
  std::uint64_t packet = 0;
  GemmShape shape;
  KernelId kernel = 0;
  int cd = 1;

  bool operator==(const DispatchEvent&) const = default;
};

struct DispatchResult {
  std::vector<std::vector<DispatchEvent>> batches;  // one per decision group
  std::vector<std::string> warnings;
};

/// Points each packet at the kernel of its group's CD and pops it. A CD
/// missing from the packet falls back to its isolated kernel; a shape missing
/// from the library gets a kernel tuned on the spot.
DispatchResult rewrite_and_dispatch(const ScheduleDecision& decision, QueueSet& qs, const GoLibrary& lib);

// Isolated-best kernel from the library's kernel space, for untuned shapes.
KernelConfig fallback_kernel(const GemmShape& shape, const GoLibrary& lib);

// Runtime of cd concurrent copies of shape running the per-CD GO kernel.
Picos homogeneous_batch_ps(const GemmShape& shape, int cd, const GoLibrary& lib);

enum class Policy { Sequential, Default, GoKernels, Dynamic, CuPartition, ResourcePartition };

std::string to_string(Policy p);
Policy policy_from_string(const std::string& s);

struct TimelineOptions {
  Policy policy = Policy::Default;
  const CdChooser* chooser = nullptr;  // required by Policy::Dynamic
  CpTiming timing;
};

struct PassThrough {
  std::size_t queue = 0;
  std::uint64_t packet = 0;
  bool operator==(const PassThrough&) const = default;
};

struct BatchRecord {
  Picos start_ps = 0;
  Picos runtime_ps = 0;
  Picos exposed_overhead_ps = 0;  // CP time charged right before this batch
  int cd = 1;
  std::vector<DispatchEvent> events;
  std::vector<PassThrough> non_gemm;
};

struct TimelineResult {
  Picos end_to_end_ps = 0;
  Picos exposed_overhead_ps = 0;
  std::size_t decisions = 0;
  std::vector<BatchRecord> batches;
  std::vector<std::string> warnings;

  double end_to_end_s() const { return to_seconds(end_to_end_ps); }
};

struct TraceEntry {
  std::size_t queue = 0;
  std::variant<GemmWork, NonGemmWork> work;
  bool operator==(const TraceEntry&) const = default;
};

using Trace = std::vector<TraceEntry>;

// Packets get ids in trace order.
QueueSet enqueue(const Trace& trace, const GoLibrary& lib);

/// Event loop over the queue heads. Under Policy::Dynamic every round that
/// sees a GEMM head costs total_decision_s, hidden behind the batch that is
/// still running; only the excess over that batch's runtime (or all of it,
/// before the first dispatch) lands on the critical path.
TimelineResult timeline(QueueSet qs, const GoLibrary& lib, const TimelineOptions& options);
TimelineResult timeline(const Trace& trace, const GoLibrary& lib, const TimelineOptions& options);

inline constexpr std::size_t kMaxOracleShapes = 6;

struct OracleResult {
  TimelineResult timeline;
  std::map<GemmShape, int> cds;
};

/// Best fixed CD per distinct shape, found by replaying the dynamic timeline
/// for every assignment. Any chooser that maps each shape to one CD, the
/// trained model included, is one of the assignments tried, so the result
/// is never slower. Equal times keep the assignment with smaller CDs.
OracleResult oracle_timeline(const Trace& trace, const GoLibrary& lib, const CpTiming& timing);

nlohmann::json trace_to_json(const Trace& trace);
Trace trace_from_json(const nlohmann::json& j);
Trace load_trace(const std::string& path);

// One JSON object per dispatched packet, newline separated.
std::string dispatch_log_jsonl(const TimelineResult& result);

}  // namespace cogemm
