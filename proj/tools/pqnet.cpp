#include "pqnet/cli/app.hpp"

int main(int argc, char** argv) { return pqnet::cli::run_cli(argc, argv); }
