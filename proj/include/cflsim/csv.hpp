#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "cflsim/fl_engine.hpp"

namespace cflsim {

/// Header `round,loss,dist_to_opt,info_loss,diverged`, one row per record.
/// Missing optional fields are left empty.
void write_csv(const std::vector<RunRecord>& records, std::ostream& out);
void emit_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path);

}  // namespace cflsim
