#include "tsfm/workbench.hpp"

int main(int argc, char** argv) { return tsfm::workbench::run_cli(argc, argv); }
