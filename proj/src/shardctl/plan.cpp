#include <ostream>

#include "minos/shardctl.hpp"

namespace minos {

PlanBoard::PlanBoard(ShardPlan initial) {
  plans_.push_back(std::make_unique<const ShardPlan>(std::move(initial)));
  current_.store(plans_.back().get(), std::memory_order_release);
}

const ShardPlan& PlanBoard::publish(ShardPlan plan) {
  std::lock_guard lock(mu_);
  plan.version = plans_.back()->version + 1;
  plans_.push_back(std::make_unique<const ShardPlan>(std::move(plan)));
  const ShardPlan* p = plans_.back().get();
  current_.store(p, std::memory_order_release);
  return *p;
}

std::vector<ShardPlan> PlanBoard::history() const {
  std::lock_guard lock(mu_);
  std::vector<ShardPlan> out;
  out.reserve(plans_.size());
  for (const auto& p : plans_) out.push_back(*p);
  return out;
}

bool equivalent(const ShardPlan& a, const ShardPlan& b) {
  return a.threshold == b.threshold && a.n == b.n && a.n_s == b.n_s && a.n_l == b.n_l &&
         a.standby == b.standby && a.large_ranges == b.large_ranges;
}

void write_plan_csv_header(std::ostream& os) {
  os << "epoch,time_ns,version,threshold,n,n_s,n_l,standby,small_cost_fraction,requests,large_ranges\n";
}

void write_plan_csv(std::ostream& os, const EpochRecord& r) {
  os << r.epoch << ',' << r.time_ns << ',' << r.plan.version << ',' << r.plan.threshold << ','
     << r.plan.n << ',' << r.plan.n_s << ',' << r.plan.n_l << ',' << (r.plan.standby ? 1 : 0) << ','
     << r.small_cost_fraction << ',' << r.observed.total() << ',';
  for (size_t i = 0; i < r.plan.large_ranges.size(); ++i) {
    if (i) os << ';';
    os << r.plan.large_ranges[i].lo << '-' << r.plan.large_ranges[i].hi;
  }
  os << '\n';
}

void write_histogram_csv_header(std::ostream& os) {
  os << "epoch,class,lower,upper,count,max_seen\n";
}

void write_histogram_csv(std::ostream& os, const EpochRecord& r) {
  for (int c = 0; c < kSizeClasses; ++c) {
    if (r.observed[c] == 0) continue;
    os << r.epoch << ',' << c << ',' << class_lower(c) << ',' << class_upper(c) << ','
       << r.observed[c] << ',' << r.observed.max_seen(c) << '\n';
  }
}

}  // namespace minos
