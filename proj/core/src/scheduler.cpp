#include "cforest/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cforest/errors.hpp"

namespace cforest {

std::string to_string(JobKind k) {
  switch (k) {
    case JobKind::fold_prep: return "fold_prep";
    case JobKind::train: return "train";
    case JobKind::predict: return "predict";
    case JobKind::combine: return "combine";
    case JobKind::evaluate_gate: return "evaluate_gate";
  }
  return "train";
}

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::ready: return "ready";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    case JobStatus::blocked: return "blocked";
  }
  return "pending";
}

JobKind job_kind_from_string(const std::string& name) {
  if (name == "fold_prep") return JobKind::fold_prep;
  if (name == "train") return JobKind::train;
  if (name == "predict") return JobKind::predict;
  if (name == "combine") return JobKind::combine;
  if (name == "evaluate_gate") return JobKind::evaluate_gate;
  throw ConfigError("unknown job kind '" + name + "'");
}

JobStatus job_status_from_string(const std::string& name) {
  if (name == "pending") return JobStatus::pending;
  if (name == "ready") return JobStatus::ready;
  if (name == "running") return JobStatus::running;
  if (name == "done") return JobStatus::done;
  if (name == "failed") return JobStatus::failed;
  if (name == "blocked") return JobStatus::blocked;
  throw ConfigError("unknown job status '" + name + "'");
}

void JobGraph::add(JobNode node) {
  if (node.id.empty()) throw ConfigError("job node with empty id");
  auto [it, inserted] = nodes_.emplace(node.id, std::move(node));
  if (!inserted) throw ConfigError("duplicate job node id '" + it->first + "'");
}

const JobNode& JobGraph::at(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ConfigError("unknown job node '" + id + "'");
  return it->second;
}

JobNode& JobGraph::at(const std::string& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ConfigError("unknown job node '" + id + "'");
  return it->second;
}

std::vector<std::string> JobGraph::topological_order() const {
  std::map<std::string, std::size_t> indegree;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& [id, node] : nodes_) {
    indegree.emplace(id, node.deps.size());
    for (const auto& dep : node.deps) {
      if (!contains(dep))
        throw ConfigError("node '" + id + "' depends on unknown node '" + dep + "'");
      dependents[dep].push_back(id);
    }
  }
  std::set<std::string> frontier;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) frontier.insert(id);
  }
  std::vector<std::string> order;
  order.reserve(nodes_.size());
  while (!frontier.empty()) {
    const std::string id = *frontier.begin();
    frontier.erase(frontier.begin());
    order.push_back(id);
    for (const auto& dep : dependents[id]) {
      if (--indegree[dep] == 0) frontier.insert(dep);
    }
  }
  if (order.size() != nodes_.size())
    throw ConfigError("job graph contains a dependency cycle");
  return order;
}

void JobGraph::verify() const { (void)topological_order(); }

std::vector<std::string> JobGraph::descendants(const std::string& id) const {
  (void)at(id);
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& [nid, node] : nodes_) {
    for (const auto& dep : node.deps) dependents[dep].push_back(nid);
  }
  std::set<std::string> seen;
  std::vector<std::string> stack{id};
  while (!stack.empty()) {
    const std::string cur = stack.back();
    stack.pop_back();
    for (const auto& nxt : dependents[cur]) {
      if (seen.insert(nxt).second) stack.push_back(nxt);
    }
  }
  return {seen.begin(), seen.end()};
}

std::filesystem::path Checkpoint::out_dir(const std::string& node_id) const {
  return dir / (node_id + ".out");
}

std::filesystem::path Checkpoint::done_path(const std::string& node_id) const {
  return dir / (node_id + ".done");
}

bool Checkpoint::has_record(const std::string& node_id) const {
  std::error_code ec;
  return std::filesystem::is_regular_file(done_path(node_id), ec);
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_eat(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace

std::string Checkpoint::digest_outputs(const std::string& node_id) const {
  const auto root = out_dir(node_id);
  std::uint64_t h = kFnvOffset;
  std::error_code ec;
  if (std::filesystem::is_directory(root, ec)) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) {
        files.push_back(std::filesystem::relative(entry.path(), root).generic_string());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
      fnv_eat(h, rel.data(), rel.size());
      fnv_eat(h, ":", 1);
      std::ifstream in(root / rel, std::ios::binary);
      if (!in) throw IoError("cannot read " + (root / rel).string());
      std::ostringstream buf;
      buf << in.rdbuf();
      const std::string bytes = buf.str();
      fnv_eat(h, bytes.data(), bytes.size());
      fnv_eat(h, "\n", 1);
    }
  }
  return to_hex(h);
}

void Checkpoint::record_done(const std::string& node_id) const {
  nlohmann::json rec;
  rec["node"] = node_id;
  rec["digest"] = digest_outputs(node_id);
  const auto path = done_path(node_id);
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << rec.dump() << '\n';
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

bool Checkpoint::is_done(const std::string& node_id) const {
  const auto path = done_path(node_id);
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  nlohmann::json rec;
  try {
    in >> rec;
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  if (!rec.is_object() || !rec.contains("digest") || !rec["digest"].is_string()) return false;
  return rec["digest"].get<std::string>() == digest_outputs(node_id);
}

bool RunReport::all_done() const {
  return std::all_of(final_status.begin(), final_status.end(),
                     [](const auto& kv) { return kv.second == JobStatus::done; });
}

std::string RunReport::event_log() const {
  std::string out;
  for (const auto& e : events) {
    out += std::to_string(e.micros);
    out += ',';
    out += e.node;
    out += ',';
    out += to_string(e.from);
    out += ',';
    out += to_string(e.to);
    out += '\n';
  }
  return out;
}

void RunReport::save_event_log(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << event_log();
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

// Fixed-size worker pool fed a queue of node snapshots. Workers never touch
// the graph; the coordinator owns every status change.
class WorkerPool {
 public:
  WorkerPool(int size, const Checkpoint& ck, const JobRunner& runner) {
    threads_.reserve(size);
    for (int i = 0; i < size; ++i) {
      threads_.emplace_back([this, &ck, &runner] {
        for (;;) {
          JobNode job;
          {
            std::unique_lock<std::mutex> lock(mu_);
            task_cv_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
            if (tasks_.empty()) return;  // stop requested and drained
            job = std::move(tasks_.front());
            tasks_.pop_front();
          }
          JobResult result;
          try {
            result = runner(job, ck);
          } catch (const std::exception& e) {
            result.ok = false;
            result.error = e.what();
          } catch (...) {
            result.ok = false;
            result.error = "unknown error";
          }
          {
            std::lock_guard<std::mutex> lock(mu_);
            finished_.emplace_back(job.id, std::move(result));
          }
          done_cv_.notify_one();
        }
      });
    }
  }

  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    task_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(JobNode job) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      tasks_.push_back(std::move(job));
    }
    task_cv_.notify_one();
  }

  std::pair<std::string, JobResult> wait_one() {
    std::unique_lock<std::mutex> lock(mu_);
    done_cv_.wait(lock, [&] { return !finished_.empty(); });
    auto out = std::move(finished_.front());
    finished_.pop_front();
    return out;
  }

 private:
  std::vector<std::thread> threads_;
  std::deque<JobNode> tasks_;
  std::deque<std::pair<std::string, JobResult>> finished_;
  std::mutex mu_;
  std::condition_variable task_cv_;
  std::condition_variable done_cv_;
  bool stop_ = false;
};

RunReport execute_impl(JobGraph& graph, int pool_size, const Checkpoint& ck,
                       const JobRunner& runner, bool skip_verified) {
  if (pool_size < 1) throw ConfigError("pool_size must be at least 1");
  graph.verify();

  RunReport report;
  const auto start = std::chrono::steady_clock::now();
  auto log_transition = [&](const std::string& id, JobStatus to) {
    JobNode& node = graph.at(id);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    report.events.push_back({micros, id, node.status, to});
    node.status = to;
  };

  std::map<std::string, std::vector<std::string>> dependents;
  std::map<std::string, std::size_t> missing;  // unmet dependency counts
  auto register_node = [&](const JobNode& node) {
    std::size_t unmet = 0;
    for (const auto& dep : node.deps) {
      dependents[dep].push_back(node.id);
      if (graph.at(dep).status != JobStatus::done) ++unmet;
    }
    missing[node.id] = unmet;
  };

  if (skip_verified) {
    for (auto& [id, node] : graph.nodes()) {
      if (ck.is_done(id)) log_transition(id, JobStatus::done);
    }
  }
  for (const auto& [id, node] : graph.nodes()) {
    if (node.status != JobStatus::done) register_node(node);
  }

  std::set<std::string> ready;
  for (const auto& [id, unmet] : missing) {
    if (unmet == 0 && graph.at(id).status == JobStatus::pending) {
      log_transition(id, JobStatus::ready);
      ready.insert(id);
    }
  }

  WorkerPool pool(pool_size, ck, runner);
  std::size_t running = 0;

  auto mark_done = [&](const std::string& id) {
    for (const auto& dep_id : dependents[id]) {
      auto it = missing.find(dep_id);
      if (it == missing.end() || it->second == 0) continue;
      if (--it->second == 0 && graph.at(dep_id).status == JobStatus::pending) {
        log_transition(dep_id, JobStatus::ready);
        ready.insert(dep_id);
      }
    }
  };

  auto block_descendants = [&](const std::string& id) {
    for (const auto& victim : graph.descendants(id)) {
      JobNode& node = graph.at(victim);
      if (node.status == JobStatus::pending || node.status == JobStatus::ready) {
        ready.erase(victim);
        log_transition(victim, JobStatus::blocked);
      }
    }
  };

  for (;;) {
    while (!ready.empty() && running < static_cast<std::size_t>(pool_size)) {
      const std::string id = *ready.begin();
      ready.erase(ready.begin());
      log_transition(id, JobStatus::running);
      ++running;
      pool.submit(graph.at(id));
    }
    if (running == 0) break;

    auto [id, result] = pool.wait_one();
    --running;
    ++report.executed;
    if (result.ok) {
      try {
        ck.record_done(id);
      } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
      }
    }
    if (result.ok) {
      log_transition(id, JobStatus::done);
      std::vector<std::string> added;
      for (auto& node : result.append) {
        if (graph.contains(node.id)) continue;  // already present in a pre-extended graph
        node.status = JobStatus::pending;
        added.push_back(node.id);
        graph.add(std::move(node));
      }
      if (!added.empty()) {
        graph.verify();
        for (const auto& nid : added) {
          register_node(graph.at(nid));
          if (missing[nid] == 0) {
            log_transition(nid, JobStatus::ready);
            ready.insert(nid);
          }
        }
      }
      mark_done(id);
    } else {
      log_transition(id, JobStatus::failed);
      report.errors[id] = result.error;
      block_descendants(id);
    }
  }

  for (const auto& [id, node] : graph.nodes()) report.final_status[id] = node.status;
  return report;
}

}  // namespace

RunReport execute(JobGraph& graph, int pool_size, const Checkpoint& checkpoint,
                  const JobRunner& runner) {
  return execute_impl(graph, pool_size, checkpoint, runner, false);
}

RunReport resume(JobGraph& graph, const Checkpoint& checkpoint, int pool_size,
                 const JobRunner& runner) {
  return execute_impl(graph, pool_size, checkpoint, runner, true);
}

namespace job_ids {

std::string fold_prep(int layer, int fold) {
  return "L" + std::to_string(layer) + "/prep/f" + std::to_string(fold);
}
std::string train(int layer, int learner, int fold) {
  return "L" + std::to_string(layer) + "/train/j" + std::to_string(learner) + "/f" +
         std::to_string(fold);
}
std::string predict(int layer, int learner, int fold) {
  return "L" + std::to_string(layer) + "/predict/j" + std::to_string(learner) + "/f" +
         std::to_string(fold);
}
std::string combine(int layer) { return "L" + std::to_string(layer) + "/combine"; }
std::string gate(int layer) { return "L" + std::to_string(layer) + "/gate"; }

}  // namespace job_ids

std::vector<JobNode> layer_subgraph_nodes(int layer_index, int k, int l) {
  if (k < 2) throw ConfigError("layer graph needs k >= 2");
  if (l < 1) throw ConfigError("layer graph needs l >= 1");
  std::vector<JobNode> nodes;
  nodes.reserve(static_cast<std::size_t>(k) + 2 * k * l + 2);
  for (int f = 0; f < k; ++f) {
    JobNode prep;
    prep.id = job_ids::fold_prep(layer_index, f);
    prep.kind = JobKind::fold_prep;
    prep.params = {layer_index, -1, f};
    nodes.push_back(std::move(prep));
  }
  JobNode combine;
  combine.id = job_ids::combine(layer_index);
  combine.kind = JobKind::combine;
  combine.params = {layer_index, -1, -1};
  for (int j = 0; j < l; ++j) {
    for (int f = 0; f < k; ++f) {
      JobNode train;
      train.id = job_ids::train(layer_index, j, f);
      train.kind = JobKind::train;
      train.params = {layer_index, j, f};
      train.deps = {job_ids::fold_prep(layer_index, f)};
      nodes.push_back(std::move(train));

      JobNode predict;
      predict.id = job_ids::predict(layer_index, j, f);
      predict.kind = JobKind::predict;
      predict.params = {layer_index, j, f};
      predict.deps = {job_ids::train(layer_index, j, f)};
      combine.deps.push_back(predict.id);
      nodes.push_back(std::move(predict));
    }
  }
  nodes.push_back(std::move(combine));
  JobNode gate;
  gate.id = job_ids::gate(layer_index);
  gate.kind = JobKind::evaluate_gate;
  gate.params = {layer_index, -1, -1};
  gate.deps = {job_ids::combine(layer_index)};
  nodes.push_back(std::move(gate));
  return nodes;
}

JobGraph build_layer_graph(int layer_index, int k, int l) {
  JobGraph graph;
  for (auto& node : layer_subgraph_nodes(layer_index, k, l)) graph.add(std::move(node));
  graph.verify();
  return graph;
}

void append_layer_graph(JobGraph& graph, int layer_index, int k, int l) {
  const std::string prev_gate = job_ids::gate(layer_index - 1);
  if (layer_index < 1 || !graph.contains(prev_gate))
    throw ConfigError("append_layer_graph requires the previous layer's gate node");
  for (auto& node : layer_subgraph_nodes(layer_index, k, l)) {
    if (node.kind == JobKind::fold_prep) node.deps.push_back(prev_gate);
    graph.add(std::move(node));
  }
  graph.verify();
}

}  // namespace cforest
