#include "cupi/cli.hpp"

int main(int argc, char** argv) { return cupi::run_cli(argc, argv); }
