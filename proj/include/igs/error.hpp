#pragma once

#include <stdexcept>
#include <string>

namespace igs {

enum class Errc {
  empty_input,
  parse_error,
  cycle_detected,
  node_not_live,
  unknown_node,
  uninformative_query,
  all_zero,
  bad_parameter,
  already_resolved,
  stale_question,
  policy_mismatch,
  not_a_tree,
  leaf_mismatch,
  too_large,
  unknown_hierarchy,
  unknown_session,
  session_closed,
  ordinal_mismatch,
  io_error,
  port_in_use,
  bad_data_dir,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace igs
