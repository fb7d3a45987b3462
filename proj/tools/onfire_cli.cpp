#include "onfire/cli.hpp"

int main(int argc, char** argv) { return onfire::run_cli(argc, argv); }
