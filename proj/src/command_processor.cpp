#include "cogemm/command_processor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"

namespace cogemm {

namespace {

int floor_supported_cd(int x) {
  int best = 1;
  for (int cd : kAllCds) {
    if (cd <= x) best = cd;
  }
  return best;
}

Picos batch_ps(std::span<const SimJob> jobs, const GoLibrary& lib) {
  if (jobs.size() == 1) return to_picos(simulate_isolated(jobs[0].shape, jobs[0].kernel, lib.gpu(), lib.card()).runtime_s);
  return to_picos(simulate_concurrent(jobs, lib.gpu(), lib.card()).makespan_s);
}

}  // namespace

Picos to_picos(double seconds) { return static_cast<Picos>(std::llround(seconds * 1e12)); }
double to_seconds(Picos ps) { return static_cast<double>(ps) * 1e-12; }

const GemmShape& KernelPacket::shape() const {
  if (!is_gemm()) throw ValidationError("packet " + std::to_string(id) + " is not a GEMM");
  return std::get<GemmWork>(work).shape;
}

double KernelPacket::non_gemm_runtime_s() const {
  if (is_gemm()) throw ValidationError("packet " + std::to_string(id) + " is a GEMM");
  return std::get<NonGemmWork>(work).runtime_s;
}

std::size_t KernelPacket::distinct_kernels() const {
  std::set<KernelId> ids;
  for (const auto& [cd, ref] : ko_map) ids.insert(ref.kernel);
  return ids.size();
}

void KernelPacket::validate() const {
  if (distinct_kernels() > kMaxKernelsPerPacket) {
    throw ValidationError("packet " + std::to_string(id) + " references more than 3 kernels");
  }
  if (!is_gemm()) {
    if (!ko_map.empty()) throw ValidationError("non-GEMM packet carries kernel objects");
    if (!(non_gemm_runtime_s() >= 0)) throw ValidationError("non-GEMM runtime must be >= 0");
  }
  if (selected_ko) {
    const bool known = std::any_of(ko_map.begin(), ko_map.end(), [&](const auto& kv) { return kv.second.kernel == *selected_ko; });
    if (!known) throw ValidationError("selected kernel is not in the packet's map");
  }
}

KernelPacket make_gemm_packet(std::uint64_t id, const GemmShape& shape, const GoLibrary& lib) {
  KernelPacket p;
  p.id = id;
  p.work = GemmWork{shape};
  if (const GoLibraryEntry* e = lib.find(shape)) {
    for (const auto& [cd, choice] : e->per_cd) p.ko_map[cd] = KoRef{choice.kernel, choice.features};
  }
  p.validate();
  return p;
}

KernelPacket make_non_gemm_packet(std::uint64_t id, double runtime_s) {
  KernelPacket p;
  p.id = id;
  p.work = NonGemmWork{runtime_s};
  p.validate();
  return p;
}

QueueSet::QueueSet(std::size_t num_queues) {
  if (num_queues == 0 || num_queues > kMaxQueues) {
    throw ValidationError("queue count must be in [1, 32], got " + std::to_string(num_queues));
  }
  queues_.resize(num_queues);
}

void QueueSet::push(std::size_t queue, KernelPacket packet) {
  if (queue >= queues_.size()) throw ValidationError("queue " + std::to_string(queue) + " does not exist");
  queues_[queue].push_back(std::move(packet));
}

const KernelPacket* QueueSet::head(std::size_t queue) const {
  if (queue >= queues_.size() || queues_[queue].empty()) return nullptr;
  return &queues_[queue].front();
}

KernelPacket& QueueSet::mutable_head(std::size_t queue) {
  if (queue >= queues_.size() || queues_[queue].empty()) throw NotFoundError("queue " + std::to_string(queue) + " is empty");
  return queues_[queue].front();
}

KernelPacket QueueSet::pop(std::size_t queue) {
  KernelPacket p = std::move(mutable_head(queue));
  queues_[queue].pop_front();
  return p;
}

bool QueueSet::empty() const {
  return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
}

std::size_t QueueSet::pending() const {
  std::size_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

std::vector<Candidate> inspect_heads(const QueueSet& qs) {
  std::vector<Candidate> out;
  for (std::size_t q = 0; q < qs.size(); ++q) {
    const KernelPacket* h = qs.head(q);
    if (h && h->is_gemm()) out.push_back({q, h->shape()});
  }
  return out;
}

int effective_cd(int predicted, int available) {
  return floor_supported_cd(std::min(predicted, available));
}

int ModelChooser::choose(const GemmShape& shape, int, const GoLibrary& lib) const {
  const GoLibraryEntry* e = lib.find(shape);
  if (!e) return 1;
  return model_.predict(extract_features(*e)).cd;
}

void CpTiming::validate() const {
  if (!(clock_hz > 0)) throw ValidationError("cp timing: clock_hz must be > 0");
  if (mem_latency_cycles < 0) throw ValidationError("cp timing: mem_latency_cycles must be >= 0");
  if (!(queue_rw_s >= 0)) throw ValidationError("cp timing: queue_rw_s must be >= 0");
  if (!(total_decision_s >= queue_rw_s)) throw ValidationError("cp timing: total_decision_s must be >= queue_rw_s");
}

void to_json(nlohmann::json& j, const CpTiming& t) {
  j = nlohmann::json{{"clock_hz", t.clock_hz},
                     {"mem_latency_cycles", t.mem_latency_cycles},
                     {"queue_rw_s", t.queue_rw_s},
                     {"total_decision_s", t.total_decision_s}};
}

void from_json(const nlohmann::json& j, CpTiming& t) {
  const CpTiming d;
  try {
    t.clock_hz = j.value("clock_hz", d.clock_hz);
    t.mem_latency_cycles = j.value("mem_latency_cycles", d.mem_latency_cycles);
    t.queue_rw_s = j.value("queue_rw_s", d.queue_rw_s);
    t.total_decision_s = j.value("total_decision_s", d.total_decision_s);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cp timing: ") + e.what());
  }
  t.validate();
}

Picos homogeneous_batch_ps(const GemmShape& shape, int cd, const GoLibrary& lib) {
  const KernelConfig& k = lib.kernel(lib.at(shape).for_cd(cd).kernel);
  const std::vector<SimJob> jobs(static_cast<std::size_t>(cd), SimJob{shape, k});
  return batch_ps(jobs, lib);
}

int MapChooser::choose(const GemmShape& shape, int, const GoLibrary&) const {
  auto it = cds_.find(shape);
  return it == cds_.end() ? fallback_ : it->second;
}

ScheduleDecision decide(std::span<const Candidate> candidates, const GoLibrary& lib, const CdChooser& chooser) {
  std::map<GemmShape, std::vector<std::size_t>> by_shape;
  for (const Candidate& c : candidates) by_shape[c.shape].push_back(c.queue);

  ScheduleDecision d;
  for (auto& [shape, queues] : by_shape) {
    std::sort(queues.begin(), queues.end());
    ScheduleGroup g;
    g.shape = shape;
    g.available = queues.size();
    g.in_library = lib.find(shape) != nullptr;
    const int available = static_cast<int>(queues.size());
    const int predicted = g.in_library ? chooser.choose(shape, available, lib) : 1;
    g.cd = effective_cd(predicted, available);
    g.queues.assign(queues.begin(), queues.begin() + g.cd);
    d.groups.push_back(std::move(g));
  }
  std::stable_sort(d.groups.begin(), d.groups.end(),
                   [](const ScheduleGroup& a, const ScheduleGroup& b) { return a.available > b.available; });
  return d;
}

KernelConfig fallback_kernel(const GemmShape& shape, const GoLibrary& lib) {
  const std::vector<ResourceConstraint> full{ResourceConstraint::full()};
  const Step1Result s1 = tune_step1(shape, lib.kernels(), lib.gpu(), full, lib.card(), Exec::Serial);
  auto it = s1.winners.find(RcLabel::Full);
  if (it == s1.winners.end()) throw NotFoundError("no valid kernel for " + shape.key());
  return it->second;
}

DispatchResult rewrite_and_dispatch(const ScheduleDecision& decision, QueueSet& qs, const GoLibrary& lib) {
  DispatchResult out;
  for (const ScheduleGroup& g : decision.groups) {
    std::vector<DispatchEvent> batch;
    for (std::size_t q : g.queues) {
      KernelPacket& p = qs.mutable_head(q);
      if (!p.is_gemm() || p.shape() != g.shape) throw ValidationError("decision does not match the head of queue " + std::to_string(q));
      if (p.ko_map.empty()) {
        const KernelConfig k = fallback_kernel(g.shape, lib);
        p.ko_map[1] = KoRef{k.id, derived_features(g.shape, k, lib.gpu())};
        out.warnings.push_back(g.shape.key() + " is not in the library; tuned an isolated kernel");
      }
      auto it = p.ko_map.find(g.cd);
      if (it == p.ko_map.end()) {
        out.warnings.push_back(g.shape.key() + " has no kernel for CD " + std::to_string(g.cd) +
                               "; using the isolated kernel");
        it = p.ko_map.find(1);
        if (it == p.ko_map.end()) throw NotFoundError("packet " + std::to_string(p.id) + " has no isolated kernel");
      }
      p.selected_ko = it->second.kernel;
      p.validate();
      const KernelPacket popped = qs.pop(q);
      batch.push_back(DispatchEvent{q, popped.id, g.shape, *popped.selected_ko, g.cd});
    }
    out.batches.push_back(std::move(batch));
  }
  return out;
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::Sequential: return "sequential";
    case Policy::Default: return "default";
    case Policy::GoKernels: return "go_kernels";
    case Policy::Dynamic: return "dynamic";
    case Policy::CuPartition: return "cu_partition";
    case Policy::ResourcePartition: return "resource_partition";
  }
  return "?";
}

Policy policy_from_string(const std::string& s) {
  for (Policy p : {Policy::Sequential, Policy::Default, Policy::GoKernels, Policy::Dynamic, Policy::CuPartition,
                   Policy::ResourcePartition}) {
    if (to_string(p) == s) return p;
  }
  throw ValidationError("unknown policy '" + s + "'");
}

QueueSet enqueue(const Trace& trace, const GoLibrary& lib) {
  std::size_t num_queues = 1;
  for (const auto& e : trace) num_queues = std::max(num_queues, e.queue + 1);
  QueueSet qs(num_queues);
  std::uint64_t id = 0;
  for (const auto& e : trace) {
    if (const auto* g = std::get_if<GemmWork>(&e.work)) {
      qs.push(e.queue, make_gemm_packet(id++, g->shape, lib));
    } else {
      qs.push(e.queue, make_non_gemm_packet(id++, std::get<NonGemmWork>(e.work).runtime_s));
    }
  }
  return qs;
}

namespace {

// Fixed-kernel policies: up to 16 heads in queue order, one batch.
BatchRecord static_batch(QueueSet& qs, std::span<const Candidate> heads, const GoLibrary& lib, Policy policy,
                         std::vector<std::string>& warnings) {
  const std::size_t count = policy == Policy::Sequential ? 1 : std::min(heads.size(), kMaxConcurrentJobs);
  const int cd = policy == Policy::GoKernels ? floor_supported_cd(static_cast<int>(count)) : 1;
  BatchRecord b;
  b.cd = static_cast<int>(count);
  std::vector<SimJob> jobs;
  for (std::size_t i = 0; i < count; ++i) {
    KernelPacket& p = qs.mutable_head(heads[i].queue);
    if (p.ko_map.empty()) {
      const KernelConfig k = fallback_kernel(p.shape(), lib);
      p.ko_map[1] = KoRef{k.id, derived_features(p.shape(), k, lib.gpu())};
      warnings.push_back(p.shape().key() + " is not in the library; tuned an isolated kernel");
    }
    auto it = p.ko_map.find(cd);
    if (it == p.ko_map.end()) {
      warnings.push_back(p.shape().key() + " has no kernel for CD " + std::to_string(cd) + "; using the isolated kernel");
      it = p.ko_map.find(1);
    }
    p.selected_ko = it->second.kernel;
    const KernelPacket popped = qs.pop(heads[i].queue);
    jobs.push_back(SimJob{popped.shape(), lib.kernel(*popped.selected_ko)});
    b.events.push_back(DispatchEvent{heads[i].queue, popped.id, popped.shape(), *popped.selected_ko, b.cd});
  }
  switch (policy) {
    case Policy::CuPartition:
      b.runtime_ps = to_picos(simulate_cu_partition(jobs, lib.gpu(), lib.card()));
      break;
    case Policy::ResourcePartition:
      b.runtime_ps = to_picos(simulate_resource_partition(jobs, lib.gpu(), lib.card()));
      break;
    default:
      b.runtime_ps = batch_ps(jobs, lib);
  }
  return b;
}

}  // namespace

TimelineResult timeline(QueueSet qs, const GoLibrary& lib, const TimelineOptions& options) {
  options.timing.validate();
  if (options.policy == Policy::Dynamic && !options.chooser) throw ConfigurationError("dynamic policy needs a CD chooser");
  const Picos decision_ps = to_picos(options.timing.total_decision_s);

  TimelineResult out;
  Picos now = 0;
  Picos last_batch = 0;  // runtime of the batch the next decision overlaps with
  auto commit = [&](BatchRecord b) {
    now += b.exposed_overhead_ps;
    b.start_ps = now;
    now += b.runtime_ps;
    last_batch = b.runtime_ps;
    out.exposed_overhead_ps += b.exposed_overhead_ps;
    out.batches.push_back(std::move(b));
  };

  while (!qs.empty()) {
    BatchRecord pass;
    for (std::size_t q = 0; q < qs.size(); ++q) {
      const KernelPacket* h = qs.head(q);
      if (h && !h->is_gemm()) {
        pass.runtime_ps = std::max(pass.runtime_ps, to_picos(h->non_gemm_runtime_s()));
        pass.non_gemm.push_back({q, h->id});
        qs.pop(q);
      }
    }
    if (!pass.non_gemm.empty()) {
      pass.cd = 0;
      commit(std::move(pass));
      continue;
    }

    const std::vector<Candidate> heads = inspect_heads(qs);
    if (options.policy != Policy::Dynamic) {
      commit(static_batch(qs, heads, lib, options.policy, out.warnings));
      continue;
    }

    ++out.decisions;
    const ScheduleDecision d = decide(heads, lib, *options.chooser);
    DispatchResult r = rewrite_and_dispatch(d, qs, lib);
    out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    Picos exposed = std::max<Picos>(0, decision_ps - last_batch);
    for (auto& events : r.batches) {
      std::vector<SimJob> jobs;
      for (const auto& e : events) jobs.push_back(SimJob{e.shape, lib.kernel(e.kernel)});
      BatchRecord b;
      b.cd = events.front().cd;
      b.runtime_ps = batch_ps(jobs, lib);
      b.exposed_overhead_ps = exposed;
      b.events = std::move(events);
      exposed = 0;
      commit(std::move(b));
    }
  }
  out.end_to_end_ps = now;
  return out;
}

TimelineResult timeline(const Trace& trace, const GoLibrary& lib, const TimelineOptions& options) {
  return timeline(enqueue(trace, lib), lib, options);
}

OracleResult oracle_timeline(const Trace& trace, const GoLibrary& lib, const CpTiming& timing) {
  std::vector<GemmShape> shapes;
  for (const auto& e : trace) {
    if (const auto* g = std::get_if<GemmWork>(&e.work)) shapes.push_back(g->shape);
  }
  std::sort(shapes.begin(), shapes.end());
  shapes.erase(std::unique(shapes.begin(), shapes.end()), shapes.end());
  std::erase_if(shapes, [&](const GemmShape& s) { return lib.find(s) == nullptr; });
  if (shapes.size() > kMaxOracleShapes) {
    throw ValidationError("oracle search covers at most " + std::to_string(kMaxOracleShapes) + " distinct shapes");
  }

  const QueueSet qs = enqueue(trace, lib);
  std::optional<OracleResult> best;
  std::vector<std::size_t> digit(shapes.size(), 0);
  while (true) {
    std::map<GemmShape, int> cds;
    for (std::size_t i = 0; i < shapes.size(); ++i) cds[shapes[i]] = kAllCds[digit[i]];
    const MapChooser chooser(cds);
    TimelineResult r = timeline(qs, lib, TimelineOptions{Policy::Dynamic, &chooser, timing});
    if (!best || r.end_to_end_ps < best->timeline.end_to_end_ps) best = OracleResult{std::move(r), std::move(cds)};
    // Odometer over assignments, first shape varying slowest.
    std::size_t pos = shapes.size();
    while (pos > 0 && ++digit[pos - 1] == kAllCds.size()) digit[--pos] = 0;
    if (pos == 0) break;
  }
  return std::move(*best);
}

nlohmann::json trace_to_json(const Trace& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : trace) {
    if (const auto* g = std::get_if<GemmWork>(&e.work)) {
      arr.push_back({{"queue", e.queue}, {"kind", "gemm"}, {"shape", g->shape}});
    } else {
      arr.push_back({{"queue", e.queue}, {"kind", "non_gemm"}, {"runtime_s", std::get<NonGemmWork>(e.work).runtime_s}});
    }
  }
  return arr;
}

Trace trace_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("trace") ? j.at("trace") : j;
  if (!arr.is_array()) throw ValidationError("trace must be a JSON array");
  Trace out;
  try {
    for (const auto& item : arr) {
      TraceEntry e;
      const auto queue = item.at("queue").get<std::int64_t>();
      if (queue < 0 || queue >= static_cast<std::int64_t>(kMaxQueues)) {
        throw ValidationError("trace queue " + std::to_string(queue) + " outside [0, 32)");
      }
      e.queue = static_cast<std::size_t>(queue);
      const std::string kind = item.at("kind").get<std::string>();
      if (kind == "gemm") {
        const auto& s = item.at("shape");
        GemmShape shape = s.is_string() ? GemmShape::from_key(s.get<std::string>()) : s.get<GemmShape>();
        shape.validate();
        e.work = GemmWork{shape};
      } else if (kind == "non_gemm") {
        const double rt = item.contains("runtime_s") ? item.at("runtime_s").get<double>() : item.at("runtime").get<double>();
        if (!(rt >= 0)) throw ValidationError("non-GEMM runtime must be >= 0");
        e.work = NonGemmWork{rt};
      } else {
        throw ValidationError("unknown trace kind '" + kind + "'");
      }
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("trace: ") + e.what());
  }
  return out;
}

Trace load_trace(const std::string& path) { return trace_from_json(read_json_file(path)); }

std::string dispatch_log_jsonl(const TimelineResult& result) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < result.batches.size(); ++i) {
    const BatchRecord& b = result.batches[i];
    for (const auto& p : b.non_gemm) {
      ss << nlohmann::json{{"batch", i}, {"start_ps", b.start_ps}, {"queue", p.queue}, {"packet", p.packet},
                           {"kind", "non_gemm"}, {"runtime_ps", b.runtime_ps}}
                .dump()
         << '\n';
    }
    for (const auto& e : b.events) {
      ss << nlohmann::json{{"batch", i}, {"start_ps", b.start_ps}, {"queue", e.queue}, {"packet", e.packet},
                           {"kind", "gemm"}, {"shape", e.shape.key()}, {"kernel", e.kernel}, {"cd", e.cd},
                           {"exposed_overhead_ps", b.exposed_overhead_ps}, {"runtime_ps", b.runtime_ps}}
                .dump()
         << '\n';
    }
  }
  return ss.str();
}

}  // namespace cogemm
