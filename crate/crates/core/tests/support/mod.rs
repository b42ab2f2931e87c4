pub mod adversary;
