"""Fire-and-forget execution fabric: wire frames, the subprocess sandbox,
the task broker, and the endpoint worker loop."""
