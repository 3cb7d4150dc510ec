#include "percoqs/cli.hpp"

int main(int argc, char** argv) { return percoqs::run_cli(argc, argv); }
