#pragma once

#include <cassert>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "edb/core.hpp"

namespace edb {

class Sim;

namespace detail {

struct PromiseBase {
  std::coroutine_handle<> continuation;
  bool detached = false;

  std::suspend_never initial_suspend() noexcept { return {}; }

  struct FinalAwaiter {
    bool await_ready() noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      auto& p = h.promise();
      std::coroutine_handle<> next =
          p.continuation ? p.continuation : std::noop_coroutine();
      if (p.detached) h.destroy();
      return next;
    }
    void await_resume() noexcept {}
  };
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() noexcept { std::terminate(); }
};

}  // namespace detail

// Eagerly-started coroutine task. A task either gets co_awaited by its
// parent (which joins it) or is detached via Sim::spawn. Single-threaded.
template <typename T = void>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::PromiseBase {
    std::optional<T> value;
    Task get_return_object() {
      return Task(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    void return_value(T v) { value.emplace(std::move(v)); }
  };

  Task(Task&& o) noexcept : h_(std::exchange(o.h_, nullptr)) {}
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool done() const { return h_.done(); }

  bool await_ready() const noexcept { return h_.done(); }
  void await_suspend(std::coroutine_handle<> parent) noexcept {
    h_.promise().continuation = parent;
  }
  T await_resume() { return std::move(*h_.promise().value); }

  void detach() {
    if (h_.done())
      h_.destroy();
    else
      h_.promise().detached = true;
    h_ = nullptr;
  }

 private:
  friend class Sim;
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  std::coroutine_handle<promise_type> h_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::PromiseBase {
    Task get_return_object() {
      return Task(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    void return_void() {}
  };

  Task(Task&& o) noexcept : h_(std::exchange(o.h_, nullptr)) {}
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool done() const { return h_.done(); }

  bool await_ready() const noexcept { return h_.done(); }
  void await_suspend(std::coroutine_handle<> parent) noexcept {
    h_.promise().continuation = parent;
  }
  void await_resume() {}

  void detach() {
    if (h_.done())
      h_.destroy();
    else
      h_.promise().detached = true;
    h_ = nullptr;
  }

 private:
  friend class Sim;
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  std::coroutine_handle<promise_type> h_;
};

enum class TraceKind : uint32_t {
  kPower = 1u << 0,
  kMove = 1u << 1,
  kController = 1u << 2,
  kTxn = 1u << 3,
  kClient = 1u << 4,
  kNet = 1u << 5,
  kDisk = 1u << 6,
};

const char* trace_kind_name(TraceKind k);

// Discrete-event virtual clock. Ties are broken by insertion sequence so
// runs with the same seed replay the same event order exactly.
class Sim {
 public:
  double now() const { return now_; }

  void schedule(double t, std::function<void()> fn) {
    assert(t >= now_);
    queue_.push(Event{t, seq_++, std::move(fn), nullptr});
  }

  void schedule_handle(double t, std::coroutine_handle<> h) {
    assert(t >= now_);
    queue_.push(Event{t, seq_++, nullptr, h});
  }

  void spawn(Task<> t) { t.detach(); }

  // Drain events with time <= t, then advance the clock to t.
  void run_until(double t) {
    while (!queue_.empty() && queue_.top().t <= t) step();
    now_ = t;
  }

  void run_all() {
    while (!queue_.empty()) step();
  }

  bool idle() const { return queue_.empty(); }

  struct DelayAwaiter {
    Sim& sim;
    double at;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) { sim.schedule_handle(at, h); }
    void await_resume() const noexcept {}
  };

  DelayAwaiter delay(double d) { return DelayAwaiter{*this, now_ + d}; }
  DelayAwaiter at(double t) { return DelayAwaiter{*this, t < now_ ? now_ : t}; }

  // --- event trace ---
  void set_trace_mask(uint32_t mask) { trace_mask_ = mask; }
  uint32_t trace_mask() const { return trace_mask_; }
  void trace(TraceKind kind, NodeId node, const std::string& detail) {
    if (!(trace_mask_ & static_cast<uint32_t>(kind))) return;
    trace_lines_.push_back(format_time(now_) + "\t" + std::to_string(node) + "\t" +
                           trace_kind_name(kind) + "\t" + detail);
  }
  const std::vector<std::string>& trace_lines() const { return trace_lines_; }

 private:
  struct Event {
    double t;
    uint64_t seq;
    std::function<void()> fn;
    std::coroutine_handle<> h;
    bool operator>(const Event& o) const {
      if (t != o.t) return t > o.t;
      return seq > o.seq;
    }
  };

  void step() {
    Event e = queue_.top();
    queue_.pop();
    now_ = e.t;
    if (e.h)
      e.h.resume();
    else
      e.fn();
  }

  double now_ = 0.0;
  uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  uint32_t trace_mask_ = 0;
  std::vector<std::string> trace_lines_;
};

// Accumulates busy time into fixed-width interval buckets; utilization
// reports read completed buckets only.
class BusyMeter {
 public:
  void configure(double interval) { interval_ = interval; }
  void add(double start, double end) {
    if (interval_ <= 0 || end <= start) return;
    size_t b0 = static_cast<size_t>(start / interval_);
    size_t b1 = static_cast<size_t>(end / interval_);
    if (buckets_.size() <= b1) buckets_.resize(b1 + 1, 0.0);
    if (b0 == b1) {
      buckets_[b0] += end - start;
      return;
    }
    buckets_[b0] += (b0 + 1) * interval_ - start;
    for (size_t b = b0 + 1; b < b1; ++b) buckets_[b] += interval_;
    buckets_[b1] += end - b1 * interval_;
  }
  // Busy seconds within [t, t+interval) for t = index*interval.
  double busy_in(size_t index) const {
    return index < buckets_.size() ? buckets_[index] : 0.0;
  }
  double interval() const { return interval_; }

 private:
  double interval_ = 0.0;
  std::vector<double> buckets_;
};

// Single FIFO server: requests are serviced in arrival order, each
// occupying the resource for its duration. Queueing delay emerges from
// next_free bookkeeping.
class Resource {
 public:
  explicit Resource(Sim& sim) : sim_(&sim) {}

  struct Use {
    double requested;
    double start;
    double end;
    double wait() const { return start - requested; }
    double total() const { return end - requested; }
  };

  struct Awaiter {
    Resource& res;
    double dur;
    Use use;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) {
      use = res.reserve(dur);
      res.sim_->schedule_handle(use.end, h);
    }
    Use await_resume() const noexcept { return use; }
  };

  // Reserve a slot and charge counters without suspending.
  Use reserve(double dur) {
    double req = sim_->now();
    double start = next_free_ > req ? next_free_ : req;
    double end = start + dur;
    next_free_ = end;
    ops_ += 1;
    busy_seconds_ += dur;
    meter_.add(start, end);
    return Use{req, start, end};
  }

  Awaiter use(double dur) { return Awaiter{*this, dur, {}}; }

  double next_free() const { return next_free_; }
  uint64_t ops() const { return ops_; }
  double busy_seconds() const { return busy_seconds_; }
  BusyMeter& meter() { return meter_; }
  const BusyMeter& meter() const { return meter_; }

 private:
  Sim* sim_;
  double next_free_ = 0.0;
  uint64_t ops_ = 0;
  double busy_seconds_ = 0.0;
  BusyMeter meter_;
};

// Condition-variable analogue: waiters park, notify releases them through
// the event queue in FIFO order.
class WaitQueue {
 public:
  explicit WaitQueue(Sim& sim) : sim_(&sim) {}

  struct Awaiter {
    WaitQueue& q;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) { q.waiters_.push_back(h); }
    void await_resume() const noexcept {}
  };

  Awaiter wait() { return Awaiter{*this}; }

  void notify_all() {
    for (auto h : waiters_) sim_->schedule_handle(sim_->now(), h);
    waiters_.clear();
  }

  void notify_one() {
    if (waiters_.empty()) return;
    sim_->schedule_handle(sim_->now(), waiters_.front());
    waiters_.pop_front();
  }

  size_t size() const { return waiters_.size(); }

 private:
  Sim* sim_;
  std::deque<std::coroutine_handle<>> waiters_;
};

}  // namespace edb
