#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cforest {

enum class JobKind { fold_prep, train, predict, combine, evaluate_gate };
enum class JobStatus { pending, ready, running, done, failed, blocked };

std::string to_string(JobKind k);
std::string to_string(JobStatus s);
JobKind job_kind_from_string(const std::string& name);      // ConfigError on unknown
JobStatus job_status_from_string(const std::string& name);  // ConfigError on unknown

/// Cascade grid coordinates a job acts on; -1 where not applicable.
struct JobParams {
  int layer = -1;
  int learner = -1;
  int fold = -1;
};

struct JobNode {
  std::string id;
  JobKind kind = JobKind::train;
  JobParams params;
  std::vector<std::string> deps;
  JobStatus status = JobStatus::pending;
};

/// Dependency graph keyed by node id. Insertion rejects duplicates;
/// verify() rejects dangling dependencies and cycles.
class JobGraph {
 public:
  void add(JobNode node);
  bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
  const JobNode& at(const std::string& id) const;
  JobNode& at(const std::string& id);
  std::size_t size() const { return nodes_.size(); }
  const std::map<std::string, JobNode>& nodes() const { return nodes_; }

  void verify() const;                              // throws ConfigError
  std::vector<std::string> topological_order() const;
  /// Every node reachable from id through dependents (id excluded).
  std::vector<std::string> descendants(const std::string& id) const;

 private:
  std::map<std::string, JobNode> nodes_;
};

/// On-disk completion records. A node's outputs live under
/// <dir>/<node-id>.out/ and its completion record at <dir>/<node-id>.done,
/// holding a digest of the output payload. A record only counts as done when
/// the digest still matches the files on disk.
struct Checkpoint {
  std::filesystem::path dir;

  std::filesystem::path out_dir(const std::string& node_id) const;
  std::filesystem::path done_path(const std::string& node_id) const;
  bool has_record(const std::string& node_id) const;
  bool is_done(const std::string& node_id) const;  // record present and digest verified
  void record_done(const std::string& node_id) const;
  std::string digest_outputs(const std::string& node_id) const;
};

/// What a runner hands back: success or failure, plus any nodes the job wants
/// appended to the graph (used by evaluate_gate to grow the next layer).
struct JobResult {
  bool ok = true;
  std::string error;
  std::vector<JobNode> append;
};

using JobRunner = std::function<JobResult(const JobNode&, const Checkpoint&)>;

struct RunEvent {
  std::int64_t micros = 0;  // since run start
  std::string node;
  JobStatus from = JobStatus::pending;
  JobStatus to = JobStatus::pending;
};

struct RunReport {
  std::vector<RunEvent> events;
  std::map<std::string, JobStatus> final_status;
  std::map<std::string, std::string> errors;  // failed node id -> message
  std::size_t executed = 0;                   // runner invocations

  bool all_done() const;
  /// One "micros,node-id,old-status,new-status" line per transition.
  std::string event_log() const;
  void save_event_log(const std::filesystem::path& path) const;
};

/// Runs the graph on a pool of pool_size workers. A node becomes ready when
/// its last dependency finishes; at most pool_size jobs run at once; ready
/// nodes start in lexicographic id order. A failed node (error result or
/// thrown exception) marks exactly its descendants blocked; independent work
/// continues. Nodes appended by a successful job join the graph immediately.
/// Refuses cyclic graphs up front.
RunReport execute(JobGraph& graph, int pool_size, const Checkpoint& checkpoint,
                  const JobRunner& runner);

/// Same scheduling, but nodes whose checkpoint records verify are marked done
/// without running. With no checkpoint directory this is a full run.
RunReport resume(JobGraph& graph, const Checkpoint& checkpoint, int pool_size,
                 const JobRunner& runner);

/// Node ids for the cascade layer subgraph.
namespace job_ids {
std::string fold_prep(int layer, int fold);
std::string train(int layer, int learner, int fold);
std::string predict(int layer, int learner, int fold);
std::string combine(int layer);
std::string gate(int layer);
}  // namespace job_ids

/// The per-layer subgraph: k fold_prep nodes, k*l train nodes (train(j,f)
/// depends on fold_prep(f)), k*l predict nodes (each on its train node), one
/// combine node over every predict, and one evaluate_gate after combine.
JobGraph build_layer_graph(int layer_index, int k, int l);

/// Appends layer_index's subgraph to an existing graph, wiring its fold_prep
/// nodes after the previous layer's gate.
void append_layer_graph(JobGraph& graph, int layer_index, int k, int l);

/// The nodes append_layer_graph would add, for gate runners to return.
std::vector<JobNode> layer_subgraph_nodes(int layer_index, int k, int l);

}  // namespace cforest
