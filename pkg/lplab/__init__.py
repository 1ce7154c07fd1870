"""Command-line front end of the Littlewood–Paley laboratory."""
