//! Host crate for the `acceptance` test target, which checks the numbered
//! acceptance criteria end to end and prints one PASS/FAIL line for each.
