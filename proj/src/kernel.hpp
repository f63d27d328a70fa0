// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <queue>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "unique_function.hpp"

namespace maodb::kernel {

enum class ActorKind : std::uint8_t { Moving, Index, Monitor, SnapshotUpdate, SnapshotController };
inline constexpr std::size_t kNumKinds = 5;

const char* kind_name(ActorKind k) noexcept;
ActorKind kind_from_name(std::string_view s);

struct ActorId {
  ActorKind kind = ActorKind::Moving;
  std::uint64_t key = 0;

  friend bool operator==(const ActorId&, const ActorId&) = default;
  friend auto operator<=>(const ActorId&, const ActorId&) = default;
};

std::string to_string(ActorId id);

struct ActorIdHash {
  std::size_t operator()(const ActorId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.key * 8 + static_cast<std::uint64_t>(id.kind));
  }
};

class Kernel;
struct Slot;

class Actor {
 public:
  virtual ~Actor() = default;

  ActorId id() const noexcept { return id_; }
  int shard() const noexcept { return shard_; }
  Kernel& kernel() const noexcept { return *kernel_; }

 private:
  friend class Kernel;
  ActorId id_;
  int shard_ = 0;
  Kernel* kernel_ = nullptr;
};

using Handler = unique_function<void(Actor&)>;
using Factory = std::function<std::unique_ptr<Actor>(ActorId)>;
using Placement = std::function<int(ActorId)>;

struct KernelConfig {
  int num_shards = 1;
  int workers_per_shard = 1;
  std::int64_t cross_shard_latency_ns = 0;
  // Simulated server capacity: each processed message occupies its shard's worker for this long.
  std::int64_t service_ns = 0;
  // Extra occupancy for messages that arrived from another shard.
  std::int64_t remote_service_ns = 0;
  std::int64_t max_skew_ns = 0;
  std::int64_t reply_timeout_ns = 0;  // 0 = wait forever; used for fault injection
  std::uint64_t seed = 1;
};

template <class R>
class Responder;

struct TimerState {
  std::atomic<bool> cancelled{false};
  std::uint64_t id = 0;
};
using TimerHandle = std::shared_ptr<TimerState>;

namespace detail {
struct Message {
  Handler fn;
  bool continuation = false;
  bool remote = false;
};
}  // namespace detail

struct Slot {
  ActorId id;
  int shard = 0;
  std::unique_ptr<Actor> actor;
  std::mutex mu;
  std::deque<detail::Message> regular;
  std::deque<detail::Message> conts;
  bool scheduled = false;
  bool turn_open = false;
  int outstanding = 0;  // asks and one-shot timers awaiting a continuation
  std::atomic<bool> running{false};
};

class Kernel {
 public:
  explicit Kernel(KernelConfig cfg = {});
  ~Kernel();
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  const KernelConfig& config() const noexcept { return cfg_; }

  void register_kind(ActorKind kind, Factory f);
  void set_placement(Placement p);

  void start();
  void shutdown();
  bool running() const noexcept { return running_.load(); }

  // Fire-and-forget delivery. Callable from any thread, including inside a handler.
  void tell(ActorId target, Handler h);

  template <class T, class F>
  void tell_as(ActorId target, F&& f) {
    tell(target, [fn = std::forward<F>(f)](Actor& a) mutable { fn(static_cast<T&>(a)); });
  }

  // Request/reply from outside the kernel. Body receives the target and a responder.
  template <class R, class T, class F>
  std::future<R> ask_external(ActorId target, F&& body);

  // Request/reply from inside a handler. The continuation runs on the asking actor, and the
  // asker's turn stays open (no other regular message runs) until all its replies are in.
  template <class R, class T, class Self, class F, class C>
  void ask(ActorId target, F&& body, C&& cont);

  // Blocking wrapper over ask_external that honours reply_timeout_ns.
  template <class R, class T, class F>
  R call(ActorId target, F&& body);

  // One-shot continuation on the calling actor after `delay_ns`; keeps the turn open.
  void after(std::int64_t delay_ns, Handler cont);

  // Periodic timer: tick k (k >= 1) fires at anchor + k*interval + U(-jitter, jitter) on the
  // owner's local clock. Fires are ordinary mailbox messages.
  TimerHandle register_timer(ActorId owner, std::int64_t interval_ns, std::int64_t jitter_ns,
                             std::int64_t anchor_ns,
                             std::function<void(Actor&, std::uint64_t)> on_tick);
  void cancel_timer(const TimerHandle& h);

  // Channels: one per key. Membership changes are synchronous.
  void subscribe(std::uint64_t channel, ActorId who);
  void unsubscribe(std::uint64_t channel, ActorId who);
  std::vector<ActorId> subscribers(std::uint64_t channel) const;

  // Delivers a copy of `f` to each current subscriber's mailbox. Returns the number notified.
  template <class F>
  std::size_t publish(std::uint64_t channel, const F& f);

  // Clock: nanoseconds since kernel construction, process wide and monotone.
  std::int64_t now() const noexcept;
  std::int64_t skew(int shard) const noexcept { return skews_.at(static_cast<std::size_t>(shard)); }
  const std::vector<std::int64_t>& skews() const noexcept { return skews_; }
  std::int64_t local_now(int shard) const noexcept { return now() + skew(shard); }

  int shard_of(ActorId id) const;
  static int current_shard() noexcept;
  static Actor* current_actor() noexcept;

  bool wait_idle(std::int64_t timeout_ns);
  std::uint64_t messages_sent() const noexcept { return sent_.load(); }
  std::uint64_t messages_processed() const noexcept { return processed_.load(); }
  std::uint64_t messages_to(ActorKind k) const noexcept {
    return to_kind_[static_cast<std::size_t>(k)].load();
  }
  std::uint64_t cross_shard_messages() const noexcept { return cross_shard_.load(); }
  std::vector<ActorId> live_actors() const;
  std::size_t live_count() const;
  std::vector<std::string> handler_errors() const;
  // Raised when an actor handler runs concurrently with itself; stays 0 unless the kernel is broken.
  std::uint64_t reentrancy_violations() const noexcept { return reentrancy_.load(); }

  // Allows a test to look at actor state after quiescence.
  template <class T>
  T* peek(ActorId id) {
    Slot* s = find_slot(id);
    return s ? static_cast<T*>(s->actor.get()) : nullptr;
  }

 private:
  template <class R>
  friend class Responder;

  struct Stripe {
    mutable std::mutex mu;
    std::unordered_map<ActorId, std::unique_ptr<Slot>, ActorIdHash> slots;
  };
  struct ShardQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Slot*> ready;
  };
  struct Timed {
    std::int64_t due;
    std::uint64_t seq;
    std::function<void()> fire;
    bool operator>(const Timed& o) const { return due != o.due ? due > o.due : seq > o.seq; }
  };
  struct Channel {
    std::vector<ActorId> members;
  };

  Slot* slot(ActorId id);
  Slot* find_slot(ActorId id) const;
  void post(Slot* target, detail::Message m, int from_shard);
  void enqueue(Slot* target, detail::Message m);
  void schedule_at(std::int64_t due, std::function<void()> fire);
  void worker_loop(int shard);
  void scheduler_loop();
  void arm_tick(const TimerHandle& h, ActorId owner, std::int64_t interval, std::int64_t jitter,
                std::int64_t anchor, std::uint64_t tick,
                std::shared_ptr<std::function<void(Actor&, std::uint64_t)>> on_tick);
  void post_continuation(Slot* asker, Handler h, int from_shard);
  Slot* begin_ask();
  void finish(std::int64_t started_ns, bool remote);

  KernelConfig cfg_;
  std::chrono::steady_clock::time_point epoch_;
  std::vector<std::int64_t> skews_;
  std::array<Factory, kNumKinds> factories_;
  Placement placement_;

  std::array<Stripe, 64> stripes_;
  std::vector<std::unique_ptr<ShardQueue>> queues_;
  std::vector<std::thread> workers_;

  std::mutex sched_mu_;
  std::condition_variable sched_cv_;
  std::priority_queue<Timed, std::vector<Timed>, std::greater<Timed>> timed_;
  std::uint64_t timed_seq_ = 0;
  std::thread scheduler_;
  std::mt19937_64 jitter_rng_;

  mutable std::shared_mutex chan_mu_;
  std::unordered_map<std::uint64_t, Channel> channels_;

  std::atomic<bool> running_{false};
  std::atomic<bool> stopped_{false};
  std::atomic<std::int64_t> inflight_{0};
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> processed_{0};
  std::atomic<std::uint64_t> cross_shard_{0};
  std::atomic<std::uint64_t> reentrancy_{0};
  std::array<std::atomic<std::uint64_t>, kNumKinds> to_kind_{};
  std::atomic<std::uint64_t> timer_ids_{0};

  mutable std::mutex err_mu_;
  std::vector<std::string> errors_;
};

template <class R>
class Responder {
 public:
  Responder() = default;
  Responder(Responder&&) noexcept = default;
  Responder& operator=(Responder&&) noexcept = default;

  void reply(R value) {
    if (promise_) {
      promise_->set_value(std::move(value));
      promise_.reset();
      return;
    }
    if (!kernel_) return;
    kernel_->post_continuation(
        asker_,
        [c = std::move(cont_), v = std::move(value)](Actor& a) mutable { c(a, std::move(v)); },
        Kernel::current_shard());
    kernel_ = nullptr;
  }

  bool external() const noexcept { return static_cast<bool>(promise_); }

 private:
  friend class Kernel;
  Kernel* kernel_ = nullptr;
  Slot* asker_ = nullptr;
  unique_function<void(Actor&, R)> cont_;
  std::shared_ptr<std::promise<R>> promise_;
};

template <class R, class T, class F>
std::future<R> Kernel::ask_external(ActorId target, F&& body) {
  auto p = std::make_shared<std::promise<R>>();
  std::future<R> fut = p->get_future();
  Responder<R> r;
  r.promise_ = p;
  tell(target, [b = std::forward<F>(body), r = std::move(r), p](Actor& a) mutable {
    try {
      b(static_cast<T&>(a), std::move(r));
    } catch (...) {
      try {
        p->set_exception(std::current_exception());
      } catch (const std::future_error&) {
      }
      throw;
    }
  });
  return fut;
}

template <class R, class T, class Self, class F, class C>
void Kernel::ask(ActorId target, F&& body, C&& cont) {
  Slot* asker = begin_ask();
  Responder<R> r;
  r.kernel_ = this;
  r.asker_ = asker;
  r.cont_ = [c = std::forward<C>(cont)](Actor& a, R v) mutable { c(static_cast<Self&>(a), std::move(v)); };
  tell(target, [b = std::forward<F>(body), r = std::move(r)](Actor& a) mutable {
    b(static_cast<T&>(a), std::move(r));
  });
}

template <class R, class T, class F>
R Kernel::call(ActorId target, F&& body) {
  std::future<R> fut = ask_external<R, T>(target, std::forward<F>(body));
  if (cfg_.reply_timeout_ns > 0) {
    if (fut.wait_for(std::chrono::nanoseconds(cfg_.reply_timeout_ns)) != std::future_status::ready)
      fail(ErrorCode::Timeout, "no reply from " + to_string(target));
  }
  return fut.get();
}

template <class F>
std::size_t Kernel::publish(std::uint64_t channel, const F& f) {
  std::vector<ActorId> members;
  {
    std::shared_lock lk(chan_mu_);
    auto it = channels_.find(channel);
    if (it == channels_.end()) return 0;
    members = it->second.members;
  }
  for (const ActorId& m : members) tell(m, Handler(F(f)));
  return members.size();
}

}  // namespace maodb::kernel
