"""Abstract BGP simulation, sequential and as a conservative parallel discrete-event simulation."""
