// SPDX-License-Identifier: Apache-2.0
#include "kernel.hpp"

#include <algorithm>
#include <chrono>

namespace maodb::kernel {

namespace {
thread_local int tl_shard = -1;
thread_local Slot* tl_slot = nullptr;
thread_local std::int64_t tl_busy_until = 0;

bool runnable(const Slot& s) {
  return s.turn_open ? !s.conts.empty() : (!s.regular.empty() || !s.conts.empty());
}
}  // namespace

const char* kind_name(ActorKind k) noexcept {
  switch (k) {
    case ActorKind::Moving: return "moving";
    case ActorKind::Index: return "index";
    case ActorKind::Monitor: return "monitor";
    case ActorKind::SnapshotUpdate: return "sua";
    case ActorKind::SnapshotController: return "controller";
  }
  return "?";
}

ActorKind kind_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNumKinds; ++i) {
    auto k = static_cast<ActorKind>(i);
    if (s == kind_name(k)) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown actor kind '" + std::string(s) + "'");
}

std::string to_string(ActorId id) {
  return std::string(kind_name(id.kind)) + ":" + std::to_string(id.key);
}

Kernel::Kernel(KernelConfig cfg) : cfg_(cfg), epoch_(std::chrono::steady_clock::now()), jitter_rng_(cfg.seed) {
  if (cfg_.num_shards < 1) fail(ErrorCode::InvalidArgument, "kernel needs at least one shard");
  if (cfg_.workers_per_shard < 1) fail(ErrorCode::InvalidArgument, "each shard needs a worker");
  if (cfg_.max_skew_ns < 0 || cfg_.cross_shard_latency_ns < 0 || cfg_.service_ns < 0 ||
      cfg_.remote_service_ns < 0)
    fail(ErrorCode::InvalidArgument, "kernel timing parameters must be non-negative");
  std::mt19937_64 rng(cfg_.seed ^ 0x5eedu);
  std::uniform_int_distribution<std::int64_t> d(-cfg_.max_skew_ns, cfg_.max_skew_ns);
  for (int i = 0; i < cfg_.num_shards; ++i) {
    skews_.push_back(cfg_.max_skew_ns > 0 ? d(rng) : 0);
    queues_.push_back(std::make_unique<ShardQueue>());
  }
}

Kernel::~Kernel() { shutdown(); }

void Kernel::register_kind(ActorKind kind, Factory f) {
  factories_[static_cast<std::size_t>(kind)] = std::move(f);
}

void Kernel::set_placement(Placement p) { placement_ = std::move(p); }

void Kernel::start() {
  if (stopped_) fail(ErrorCode::KernelStopped, "kernel already shut down");
  if (running_.exchange(true)) return;
  for (int s = 0; s < cfg_.num_shards; ++s)
    for (int w = 0; w < cfg_.workers_per_shard; ++w) workers_.emplace_back([this, s] { worker_loop(s); });
  scheduler_ = std::thread([this] { scheduler_loop(); });
}

void Kernel::shutdown() {
  if (stopped_.exchange(true)) return;
  running_ = false;
  {
    std::lock_guard lk(sched_mu_);
  }
  sched_cv_.notify_all();
  for (auto& q : queues_) {
    { std::lock_guard lk(q->mu); }
    q->cv.notify_all();
  }
  for (auto& t : workers_) t.join();
  if (scheduler_.joinable()) scheduler_.join();
  workers_.clear();
}

std::int64_t Kernel::now() const noexcept {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - epoch_)
      .count();
}

int Kernel::shard_of(ActorId id) const {
  const int s = placement_ ? placement_(id) : 0;
  if (s < 0 || s >= cfg_.num_shards)
    fail(ErrorCode::InvalidArgument, "placement maps " + to_string(id) + " outside the shard range");
  return s;
}

int Kernel::current_shard() noexcept { return tl_shard; }
Actor* Kernel::current_actor() noexcept { return tl_slot ? tl_slot->actor.get() : nullptr; }

Slot* Kernel::find_slot(ActorId id) const {
  const Stripe& st = stripes_[ActorIdHash{}(id) % stripes_.size()];
  std::lock_guard lk(st.mu);
  auto it = st.slots.find(id);
  return it == st.slots.end() ? nullptr : it->second.get();
}

Slot* Kernel::slot(ActorId id) {
  Stripe& st = stripes_[ActorIdHash{}(id) % stripes_.size()];
  std::lock_guard lk(st.mu);
  auto it = st.slots.find(id);
  if (it != st.slots.end()) return it->second.get();
  const Factory& f = factories_[static_cast<std::size_t>(id.kind)];
  if (!f) fail(ErrorCode::InvalidArgument, std::string("no factory for actor kind ") + kind_name(id.kind));
  auto s = std::make_unique<Slot>();
  s->id = id;
  s->shard = shard_of(id);
  s->actor = f(id);
  s->actor->id_ = id;
  s->actor->shard_ = s->shard;
  s->actor->kernel_ = this;
  Slot* raw = s.get();
  st.slots.emplace(id, std::move(s));
  return raw;
}

void Kernel::tell(ActorId target, Handler h) {
  if (stopped_) fail(ErrorCode::KernelStopped, "send to " + to_string(target) + " after shutdown");
  Slot* s = slot(target);
  to_kind_[static_cast<std::size_t>(target.kind)]++;
  post(s, detail::Message{std::move(h), false, false}, tl_shard);
}

void Kernel::post_continuation(Slot* asker, Handler h, int from_shard) {
  if (stopped_) return;
  post(asker, detail::Message{std::move(h), true, false}, from_shard);
}

void Kernel::post(Slot* target, detail::Message m, int from_shard) {
  sent_++;
  inflight_++;
  const bool remote = from_shard >= 0 && from_shard != target->shard;
  if (remote) {
    cross_shard_++;
    m.remote = true;
    if (cfg_.cross_shard_latency_ns > 0) {
      auto boxed = std::make_shared<detail::Message>(std::move(m));
      schedule_at(now() + cfg_.cross_shard_latency_ns,
                  [this, target, boxed] { enqueue(target, std::move(*boxed)); });
      return;
    }
  }
  enqueue(target, std::move(m));
}

void Kernel::enqueue(Slot* target, detail::Message m) {
  bool push = false;
  {
    std::lock_guard lk(target->mu);
    if (m.continuation)
      target->conts.push_back(std::move(m));
    else
      target->regular.push_back(std::move(m));
    if (!target->scheduled && runnable(*target)) {
      target->scheduled = true;
      push = true;
    }
  }
  if (push) {
    ShardQueue& q = *queues_[static_cast<std::size_t>(target->shard)];
    {
      std::lock_guard lk(q.mu);
      q.ready.push_back(target);
    }
    q.cv.notify_one();
  }
}

Slot* Kernel::begin_ask() {
  Slot* s = tl_slot;
  if (!s) fail(ErrorCode::Internal, "ask issued outside an actor turn");
  std::lock_guard lk(s->mu);
  s->outstanding++;
  return s;
}

void Kernel::after(std::int64_t delay_ns, Handler cont) {
  Slot* s = begin_ask();
  sent_++;
  inflight_++;
  auto boxed = std::make_shared<Handler>(std::move(cont));
  schedule_at(now() + std::max<std::int64_t>(delay_ns, 0), [this, s, boxed] {
    enqueue(s, detail::Message{std::move(*boxed), true, false});
  });
}

void Kernel::schedule_at(std::int64_t due, std::function<void()> fire) {
  {
    std::lock_guard lk(sched_mu_);
    timed_.push(Timed{due, timed_seq_++, std::move(fire)});
  }
  sched_cv_.notify_one();
}

void Kernel::scheduler_loop() {
  std::unique_lock lk(sched_mu_);
  while (!stopped_) {
    if (timed_.empty()) {
      sched_cv_.wait(lk);
      continue;
    }
    const std::int64_t due = timed_.top().due;
    if (due > now()) {
      sched_cv_.wait_until(lk, epoch_ + std::chrono::nanoseconds(due));
      continue;
    }
    std::function<void()> fire = std::move(const_cast<Timed&>(timed_.top()).fire);
    timed_.pop();
    lk.unlock();
    fire();
    lk.lock();
  }
}

TimerHandle Kernel::register_timer(ActorId owner, std::int64_t interval_ns, std::int64_t jitter_ns,
                                   std::int64_t anchor_ns,
                                   std::function<void(Actor&, std::uint64_t)> on_tick) {
  if (interval_ns <= 0) fail(ErrorCode::InvalidArgument, "timer interval must be positive");
  if (jitter_ns < 0 || 2 * jitter_ns >= interval_ns)
    fail(ErrorCode::InvalidArgument, "timer jitter must be in [0, interval/2)");
  auto h = std::make_shared<TimerState>();
  h->id = ++timer_ids_;
  arm_tick(h, owner, interval_ns, jitter_ns, anchor_ns, 1,
           std::make_shared<std::function<void(Actor&, std::uint64_t)>>(std::move(on_tick)));
  return h;
}

void Kernel::arm_tick(const TimerHandle& h, ActorId owner, std::int64_t interval, std::int64_t jitter,
                      std::int64_t anchor, std::uint64_t tick,
                      std::shared_ptr<std::function<void(Actor&, std::uint64_t)>> on_tick) {
  std::int64_t j = 0;
  if (jitter > 0) {
    std::lock_guard lk(sched_mu_);
    j = std::uniform_int_distribution<std::int64_t>(-jitter, jitter)(jitter_rng_);
  }
  const std::int64_t due =
      anchor + static_cast<std::int64_t>(tick) * interval + j - skew(shard_of(owner));
  schedule_at(due, [=, this] {
    if (h->cancelled || stopped_) return;
    post(slot(owner),
         detail::Message{[h, on_tick, tick](Actor& a) {
                           if (!h->cancelled) (*on_tick)(a, tick);
                         },
                         false, false},
         -1);
    arm_tick(h, owner, interval, jitter, anchor, tick + 1, on_tick);
  });
}

void Kernel::cancel_timer(const TimerHandle& h) {
  if (h) h->cancelled = true;
}

void Kernel::subscribe(std::uint64_t channel, ActorId who) {
  std::unique_lock lk(chan_mu_);
  auto& m = channels_[channel].members;
  if (std::find(m.begin(), m.end(), who) == m.end()) m.push_back(who);
}

void Kernel::unsubscribe(std::uint64_t channel, ActorId who) {
  std::unique_lock lk(chan_mu_);
  auto it = channels_.find(channel);
  if (it == channels_.end()) return;
  auto& m = it->second.members;
  m.erase(std::remove(m.begin(), m.end(), who), m.end());
}

std::vector<ActorId> Kernel::subscribers(std::uint64_t channel) const {
  std::shared_lock lk(chan_mu_);
  auto it = channels_.find(channel);
  return it == channels_.end() ? std::vector<ActorId>{} : it->second.members;
}

void Kernel::finish(std::int64_t started_ns, bool remote) {
  const std::int64_t cost = cfg_.service_ns + (remote ? cfg_.remote_service_ns : 0);
  if (cost <= 0) return;
  tl_busy_until = std::max(tl_busy_until, started_ns) + cost;
  const std::int64_t ahead = tl_busy_until - now();
  // Sleep in chunks so short costs accumulate instead of paying the wakeup overhead per message.
  if (ahead > 200'000)
    std::this_thread::sleep_until(epoch_ + std::chrono::nanoseconds(tl_busy_until));
}

void Kernel::worker_loop(int shard) {
  tl_shard = shard;
  ShardQueue& q = *queues_[static_cast<std::size_t>(shard)];
  for (;;) {
    Slot* s = nullptr;
    {
      std::unique_lock lk(q.mu);
      q.cv.wait(lk, [&] { return stopped_ || !q.ready.empty(); });
      if (stopped_) return;
      s = q.ready.front();
      q.ready.pop_front();
    }
    detail::Message m;
    {
      std::lock_guard lk(s->mu);
      if (!s->conts.empty()) {
        m = std::move(s->conts.front());
        s->conts.pop_front();
      } else {
        m = std::move(s->regular.front());
        s->regular.pop_front();
      }
    }
    const std::int64_t started = now();
    if (s->running.exchange(true)) reentrancy_++;
    tl_slot = s;
    try {
      m.fn(*s->actor);
    } catch (const std::exception& e) {
      std::lock_guard lk(err_mu_);
      errors_.push_back(to_string(s->id) + ": " + e.what());
    }
    tl_slot = nullptr;
    s->running = false;
    const bool remote = m.remote;
    m.fn = nullptr;
    bool again = false;
    {
      std::lock_guard lk(s->mu);
      if (m.continuation) s->outstanding--;
      s->turn_open = s->outstanding > 0;
      again = runnable(*s);
      if (!again) s->scheduled = false;
    }
    if (again) {
      std::lock_guard lk(q.mu);
      q.ready.push_back(s);
    }
    processed_++;
    inflight_--;
    finish(started, remote);
  }
}

bool Kernel::wait_idle(std::int64_t timeout_ns) {
  const std::int64_t deadline = now() + timeout_ns;
  while (inflight_.load() != 0) {
    if (now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  return true;
}

std::vector<ActorId> Kernel::live_actors() const {
  std::vector<ActorId> out;
  for (const Stripe& st : stripes_) {
    std::lock_guard lk(st.mu);
    for (const auto& kv : st.slots) out.push_back(kv.first);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Kernel::live_count() const {
  std::size_t n = 0;
  for (const Stripe& st : stripes_) {
    std::lock_guard lk(st.mu);
    n += st.slots.size();
  }
  return n;
}

std::vector<std::string> Kernel::handler_errors() const {
  std::lock_guard lk(err_mu_);
  return errors_;
}

}  // namespace maodb::kernel
