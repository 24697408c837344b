//! Learning policies for LTL objectives in unknown MDPs with a K-counter
//! product MDP and tabular Q-learning, plus an exact model checker for the
//! induced Markov chains.

pub mod automata;
pub mod cli;
pub mod envs;
pub mod graph;
pub mod learn;
pub mod ltl;
pub mod mc;
pub mod product;
