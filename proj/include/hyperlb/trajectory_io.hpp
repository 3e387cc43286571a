#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperlb/fluid_async.hpp"
#include "hyperlb/fluid_sync.hpp"
#include "hyperlb/simulator.hpp"

namespace hyperlb {

/// Every trajectory (fluid or simulated) is written as long-format CSV with
/// header "t,i,j,y"; zero entries are omitted.
void write_trajectory_csv(std::ostream& out, const std::vector<double>& grid, const std::vector<FluidState>& states);
void write_trajectory_csv(std::ostream& out, const std::vector<Snapshot>& snapshots);

/// Reads a single state from trajectory CSV: the rows with the smallest t.
FluidState read_state_csv(std::istream& in, int jmax);

std::string format_number(double value);

nlohmann::json to_json(const MetricsRecord& record, bool with_trajectory = false);
nlohmann::json to_json(const ReplicationResult& result);

}  // namespace hyperlb
