#pragma once

#include <string>

// Command implementations behind the executable: load and validate a
// network, run the requested solver(s), and write the iteration trace CSV
// and the summary JSON. Exit codes: 0 solved/converged, 1 input error,
// 2 ran but did not converge (or the reference found nothing feasible).

namespace oef {

struct CliOptions {
  std::string network;
  std::string mode = "distributed";  // central | distributed
  std::string weymouth = "uni";      // uni | bi
  double penalty = 1.0;
  double tol_pri = 1e-4;
  double tol_dual = 1e-4;
  int max_iter = 5000;
  std::string trace_path;    // empty: no trace file
  std::string summary_path;  // empty: stdout only
  bool stop_either = false;  // stop when either residual passes, not both
  bool timing = false;       // fill wall_time_ms fields (off: null/0 so
                             // repeated runs are byte-identical)
};

int cmd_solve(const CliOptions& opt);
int cmd_compare(const CliOptions& opt);

}  // namespace oef
