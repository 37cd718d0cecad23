from cmsynth.cli import main

main()
