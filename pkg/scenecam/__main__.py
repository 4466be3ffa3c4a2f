from scenecam.cli import run

run()
