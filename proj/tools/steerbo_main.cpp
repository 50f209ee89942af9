#include "steerbo/cli.hpp"

int main(int argc, char** argv) { return steerbo::run_cli(argc, argv); }
