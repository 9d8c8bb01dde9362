#pragma once

#include "uniquid/harness/scenario.hpp"

namespace uniquid::harness {

// Per-client FIFO model of the announce stage: every identity opens a
// channel as soon as it exists, at most `cap` are open per client, and each
// holds its channel for `service_ms` before the identity reaches the
// imprinter `latency_ms` later. Returns the mean announce delay in minutes.
double announce_model_mean_min(const std::vector<std::size_t>& ids_per_client, std::size_t cap,
                               double generation_ms, double service_ms, double latency_ms);

// Service time (ms) for which the model's mean announce delay equals
// `target_min`, found by bisection. Throws Error(ScenarioConfig) when the
// target is below the contention-free floor.
double fit_service_time_ms(const std::vector<std::size_t>& ids_per_client, std::size_t cap,
                           double generation_ms, double latency_ms, double target_min);

// Splits `identities` across `clients` as evenly as possible, earlier
// clients taking the remainder.
std::vector<std::size_t> split_identities(std::size_t identities, std::size_t clients);

// Scenario kinds: "enrolment", "stale-permission", "smart-vehicle",
// "sensor-network", "cap-dichotomy".
Report run_enrolment(const Scenario& scenario);
Report run_stale_permission_attack(const Scenario& scenario);
Report run_smart_vehicle(const Scenario& scenario);
Report run_sensor_network(const Scenario& scenario);
Report run_cap_dichotomy(const Scenario& scenario);

// Dispatches on scenario.kind. Throws Error(ScenarioConfig) for unknown kinds.
Report run_scenario(const Scenario& scenario);

} // namespace uniquid::harness
