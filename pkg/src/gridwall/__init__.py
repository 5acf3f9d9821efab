"""Two-car race-strategy system: duel simulation, self-play trained
pit-wall agents, Elo battle arena and a live console."""

__version__ = "0.1.0"
