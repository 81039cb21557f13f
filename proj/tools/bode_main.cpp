#include "bode/experiment.hpp"

int main(int argc, char** argv) { return bode::run_cli(argc, argv); }
