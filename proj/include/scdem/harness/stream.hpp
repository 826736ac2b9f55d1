#pragma once

#include <string>
#include <vector>

#include "scdem/harness/dataset.hpp"

namespace scdem {

/// One step of the stream: its data and the global classes it introduces.
struct Task {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> class_set;
  std::string domain;
};

enum class StreamKind { class_incremental, multi_domain };

/// Ordered tasks, trained in sequence.
struct TaskStream {
  std::vector<Task> tasks;
  StreamKind kind = StreamKind::class_incremental;
  std::vector<std::string> domain_order;
  std::size_t num_classes = 0;  // size of the global label space

  std::size_t size() const { return tasks.size(); }
};

/// One source domain with its own local label space [0, num_classes).
struct DomainData {
  std::string name;
  Dataset train;
  Dataset test;
  std::size_t num_classes = 0;
};

namespace detail {

inline void append_class_incremental(TaskStream& stream, const DomainData& domain, std::size_t n_steps,
                                     std::size_t label_offset) {
  if (n_steps == 0) throw ConfigurationError("n_steps must be >= 1");
  if (domain.num_classes % n_steps != 0) {
    throw ConfigurationError("domain '" + domain.name + "': " + std::to_string(domain.num_classes) +
                             " classes are not divisible into " + std::to_string(n_steps) + " steps");
  }
  const std::size_t per_task = domain.num_classes / n_steps;
  auto relabel = [label_offset](Dataset ds) {
    for (auto& y : ds.labels) y += label_offset;
    return ds;
  };
  for (std::size_t step = 0; step < n_steps; ++step) {
    const std::size_t lo = step * per_task, hi = lo + per_task;
    auto in_block = [lo, hi](std::size_t y) { return y >= lo && y < hi; };
    Task task;
    const std::string tag = domain.name + "/task" + std::to_string(step + 1);
    task.train = relabel(domain.train.filter(in_block, tag + "/train"));
    task.test = relabel(domain.test.filter(in_block, tag + "/test"));
    if (task.train.size() == 0 || task.test.size() == 0) {
      throw ValidationError("task '" + tag + "' has no train or no test samples");
    }
    for (std::size_t c = lo; c < hi; ++c) task.class_set.push_back(c + label_offset);
    task.domain = domain.name;
    stream.tasks.push_back(std::move(task));
  }
}

inline void check_labels(const DomainData& d) {
  for (const auto* ds : {&d.train, &d.test})
    for (auto y : ds->labels)
      if (y >= d.num_classes) {
        throw ValidationError("domain '" + d.name + "': label " + std::to_string(y) + " outside [0," +
                              std::to_string(d.num_classes) + ")");
      }
}

}  // namespace detail

/// Contiguous blocks of classes in ascending label order, one block per step.
inline TaskStream build_class_incremental_stream(const DomainData& domain, std::size_t n_steps) {
  detail::check_labels(domain);
  TaskStream s;
  s.kind = StreamKind::class_incremental;
  s.domain_order = {domain.name};
  s.num_classes = domain.num_classes;
  detail::append_class_incremental(s, domain, n_steps, 0);
  return s;
}

inline TaskStream build_class_incremental_stream(const SplitDataset& ds, std::size_t n_steps,
                                                 std::string name = "domain") {
  return build_class_incremental_stream(DomainData{std::move(name), ds.train, ds.test, ds.num_classes}, n_steps);
}

/// Per-domain class-incremental streams concatenated in the given order.
/// Each domain's labels are offset past the previous domains' so the global
/// label ranges are disjoint.
inline TaskStream build_multi_domain_stream(const std::vector<DomainData>& domains, std::size_t steps_per_domain) {
  if (domains.empty()) throw ConfigurationError("multi-domain stream needs at least one domain");
  TaskStream s;
  s.kind = StreamKind::multi_domain;
  std::size_t offset = 0;
  for (const auto& d : domains) {
    detail::check_labels(d);
    detail::append_class_incremental(s, d, steps_per_domain, offset);
    s.domain_order.push_back(d.name);
    offset += d.num_classes;
  }
  s.num_classes = offset;
  return s;
}

}  // namespace scdem
