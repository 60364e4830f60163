//! The clients-lead, server-follows resource allocation game.

pub mod equilibrium;
pub mod follower;
pub mod leader;
pub mod power;

pub use equilibrium::{
    evaluate, stackelberg_solve, within_deadline, AllocationDecision, Choice, ClientAllocation,
    Equilibrium, Instance, SolverSettings, Uplink,
};
pub use follower::{alpha_for_workloads, follower_alpha, FollowerBranch, FollowerResponse};
pub use leader::{leader_f, leader_v};
pub use power::{
    dinkelbach_power, kkt_stationary_power, subgradient_duals, successive_power,
    DinkelbachSettings, DinkelbachStep, DinkelbachTrace, DualState, PowerClient, PowerProblem,
};
