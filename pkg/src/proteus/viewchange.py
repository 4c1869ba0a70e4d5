"""
Whole-committee view change.

Every replica sends its local history summary (tip seq, tip digest and the
global quorum certificate that committed the tip) to the members of the new
committee. A member that holds ``2f+1`` valid summaries from distinct senders
broadcasts them as a history quorum ``Q``. Replicas bring their chain up to
Q's agreed tip, then send READY; ``2f+1`` READY messages form the ready
quorum ``P`` that returns everyone to normal mode in the new view.

Certified tips are committed blocks, so every certified summary tip is a
prefix of the highest one. Q adopts the highest certified tip among its
entries. A replica that signed a vote at a sequence above Q's tip waits one
lock period before sending READY, which gives any in-flight confirm for
that block time to arrive and lift the agreed tip instead. The lock is
released when the wait expires.
"""

from __future__ import annotations

from .core import (
    GENESIS, GLOBAL, HISTORY_QUORUM, READY, READY_QUORUM, SYNC_REQUEST, TIMEOUT_COMPLAINT,
    VIEW_CHANGE, ZERO_DIGEST, QuorumCertificate, SignedMessage, verify_quorum_cert,
)

VC_KINDS = frozenset({VIEW_CHANGE, HISTORY_QUORUM, READY, READY_QUORUM})


class ViewChangeMixin:
    """View-change handlers shared by every replica; mixed into ``Replica``."""

    def _reset_vc_state(self) -> None:
        self.summaries: dict = {}
        self.q_tip = None
        self.readies: dict = {}
        self.p_sent = False
        self.best_q = None
        self.ready_sent: set = set()
        self.ready_floor = None
        self.pending_p = None
        self.summary_height = None
        self.lock_wait_armed = False
        self.lock_wait_done = False
        self.vc_sync_targets: set = set()

    # -- entry --------------------------------------------------------------

    def start_view_change(self, new_view: int, out) -> None:
        from .replica import VIEW_CHANGE as VC_MODE

        if new_view <= self.view:
            return
        out.timer_cancels.append(("epoch", self.view, self.tip.seq + 1))
        out.timer_cancels.append(("block", self.view, self.tip.seq + 1))
        out.timer_cancels.append(("vc", self.view))
        self.view = new_view
        self.mode = VC_MODE
        self.committee = self.committee_of(new_view)
        locked = self.known_blocks.get(self.lock[2]) if self.lock is not None else None
        self._reset_view_state()
        self._reset_vc_state()
        if locked is not None:
            # a confirm for the locked block may still be in flight
            self.known_blocks[locked.digest] = locked
        out.notes.append(f"vc-start:v{new_view}")
        self.initiate_view_change(out)
        out.timer_sets.append((("vc", new_view), self.params.epoch_timeout))
        self._replay_buffer(out)

    def history_summary(self) -> SignedMessage:
        tip = self.tip
        return self.sign(VIEW_CHANGE, self.view, tip.seq, tip.digest, self.chain.tip_cert)

    def initiate_view_change(self, out) -> None:
        """Send this replica's history summary to the new committee."""
        self.summary_height = self.tip.seq
        out.send(self.members(), self.history_summary())

    # -- validation ---------------------------------------------------------

    def _valid_summary(self, m, view: int) -> bool:
        if not isinstance(m, SignedMessage) or m.kind != VIEW_CHANGE or m.view != view:
            return False
        if not self.auth.verify_message(m):
            return False
        if m.seq == 0:
            return m.digest == GENESIS.digest and m.body is None
        cert = m.body
        return (isinstance(cert, QuorumCertificate) and cert.threshold_kind == GLOBAL
                and cert.seq == m.seq
                and verify_quorum_cert(cert, m.digest, (), self.params.f, self.params.c, self.auth))

    def _valid_history_quorum(self, q: SignedMessage) -> bool:
        if q.sender not in self.committee_of(q.view) or not isinstance(q.body, tuple):
            return False
        senders = set()
        top = None
        for entry in q.body:
            if not self._valid_summary(entry, q.view) or entry.sender in senders:
                return False
            senders.add(entry.sender)
            if top is None or entry.seq > top.seq:
                top = entry
        if len(senders) < self.params.global_quorum or top is None:
            return False
        return (top.seq, top.digest) == (q.seq, q.digest)

    def _valid_ready_quorum(self, p: SignedMessage) -> bool:
        if p.sender not in self.committee_of(p.view) or not isinstance(p.body, tuple):
            return False
        senders = set()
        for r in p.body:
            if (not isinstance(r, SignedMessage) or r.kind != READY or r.sender in senders
                    or (r.view, r.seq, r.digest) != (p.view, p.seq, p.digest)
                    or not self.auth.verify_message(r)):
                return False
            senders.add(r.sender)
        return len(senders) >= self.params.global_quorum

    # -- dispatch -----------------------------------------------------------

    def vc_dispatch(self, msg: SignedMessage, out) -> None:
        from .replica import VIEW_CHANGE as VC_MODE

        if msg.view > self.view:
            self.buffer.append(msg)
            return
        if msg.view < self.view or self.mode != VC_MODE:
            return
        if msg.kind == VIEW_CHANGE:
            self.vc_handle_history(msg, out)
        elif msg.kind == HISTORY_QUORUM:
            self.vc_handle_quorum(msg, out)
        elif msg.kind == READY:
            self.vc_handle_ready(msg, out)
        elif msg.kind == READY_QUORUM:
            self.vc_handle_ready_quorum(msg, out)

    def vc_handle_history(self, msg: SignedMessage, out) -> None:
        """New member: gather summaries; broadcast Q once 2f+1 distinct senders are in."""
        if not self.is_member:
            return
        if not self._valid_summary(msg, self.view):
            out.notes.append("bad-summary")
            return
        prev = self.summaries.get(msg.sender)
        if prev is not None and prev.seq >= msg.seq:
            return
        self.summaries[msg.sender] = msg
        if self.p_sent or len(self.summaries) < self.params.global_quorum:
            return
        entries = tuple(self.summaries[s] for s in sorted(self.summaries))
        top = max(entries, key=lambda e: e.seq)
        if self.q_tip is not None and top.seq <= self.q_tip[0]:
            return
        self.q_tip = (top.seq, top.digest)
        q = self.sign(HISTORY_QUORUM, self.view, top.seq, top.digest, entries)
        out.send(self.everyone(), q)
        out.notes.append(f"vc-q:v{self.view}:s{top.seq}")

    def vc_handle_quorum(self, q: SignedMessage, out) -> None:
        if not self._valid_history_quorum(q):
            out.notes.append("invalid-quorum")
            return
        if self.best_q is None or q.seq > self.best_q.seq:
            self.best_q = q
        self._vc_progress(out)

    def _request_sync(self, target_seq: int, candidates, out) -> None:
        if target_seq in self.vc_sync_targets:
            return
        self.vc_sync_targets.add(target_seq)
        peers = [s for s in candidates if s != self.id][: self.params.f + 1]
        if peers:
            out.send(peers, self.sign(SYNC_REQUEST, self.view, target_seq, ZERO_DIGEST,
                                      self.tip.seq + 1))
            out.notes.append(f"vc-sync:s{target_seq}")

    def _vc_progress(self, out) -> None:
        q = self.best_q
        if q is None:
            return
        tip = self.tip
        if tip.seq < q.seq:
            self._request_sync(q.seq, [e.sender for e in q.body if e.seq >= q.seq], out)
            return
        if tip.seq > q.seq:
            return
        if tip.digest != q.digest:
            out.notes.append("q-digest-mismatch")
            return
        if self.lock is not None and self.lock[1] > q.seq and not self.lock_wait_done:
            if not self.lock_wait_armed:
                self.lock_wait_armed = True
                out.timer_sets.append((("lockwait", self.view), self.params.lock_wait))
                out.notes.append(f"lock-wait:s{self.lock[1]}")
            return
        key = (q.seq, q.digest)
        if key not in self.ready_sent:
            self.ready_sent.add(key)
            self.ready_floor = q.seq
            out.send(self.members(), self.sign(READY, self.view, q.seq, q.digest))
            out.notes.append(f"vc-ready:v{self.view}:s{q.seq}")
        self._check_pending_p(out)

    def vc_handle_ready(self, msg: SignedMessage, out) -> None:
        """New member: gather READY messages; broadcast P at 2f+1 distinct senders."""
        if not self.is_member or self.p_sent:
            return
        bucket = self.readies.setdefault((msg.seq, msg.digest), {})
        bucket.setdefault(msg.sender, msg)
        if len(bucket) < self.params.global_quorum:
            return
        self.p_sent = True
        chosen = tuple(bucket[s] for s in sorted(bucket))
        p = self.sign(READY_QUORUM, self.view, msg.seq, msg.digest, chosen)
        out.send(self.everyone(), p)
        out.notes.append(f"vc-p:v{self.view}:s{msg.seq}")

    def vc_handle_ready_quorum(self, p: SignedMessage, out) -> None:
        if not self._valid_ready_quorum(p):
            out.notes.append("invalid-ready-quorum")
            return
        tip = self.tip
        if tip.seq < p.seq:
            self.pending_p = p
            self._request_sync(p.seq, [r.sender for r in p.body], out)
            return
        if tip.seq > p.seq or tip.digest != p.digest:
            out.notes.append("ahead-of-ready-quorum")
            return
        self._finish_view_change(out)

    def _check_pending_p(self, out) -> None:
        p = self.pending_p
        if p is not None and self.tip.seq == p.seq and self.tip.digest == p.digest:
            self._finish_view_change(out)

    def _finish_view_change(self, out) -> None:
        out.timer_cancels.append(("vc", self.view))
        out.timer_cancels.append(("lockwait", self.view))
        out.notes.append(f"vc-done:v{self.view}")
        if self.lock is not None and self.lock[1] > self.tip.seq:
            self.lock = None
        self._reset_vc_state()
        self._enter_normal(self.view, out)

    # -- hooks used by the normal-mode code ---------------------------------

    def vc_on_commit(self, out) -> None:
        """A block committed during the view change: report the higher tip."""
        if self.summary_height is None or self.tip.seq > self.summary_height:
            self.initiate_view_change(out)
        self._vc_progress(out)
        self._check_pending_p(out)

    def vc_commit_allowed(self, block) -> bool:
        if self.ready_floor is None:
            return True
        ceiling = self.ready_floor
        if self.best_q is not None:
            ceiling = max(ceiling, self.best_q.seq)
        if self.pending_p is not None:
            ceiling = max(ceiling, self.pending_p.seq)
        return block.seq <= ceiling

    def vc_on_timer(self, tid: tuple, out) -> None:
        from .replica import VIEW_CHANGE as VC_MODE

        kind, view = tid[0], tid[1]
        if view != self.view or self.mode != VC_MODE:
            return
        if kind == "vc":
            key = (view, "vc")
            if key in self.complained:
                return
            self.complained.add(key)
            out.send(self.members(), self.sign(TIMEOUT_COMPLAINT, view, self.tip.seq + 1,
                                               ZERO_DIGEST))
        elif kind == "lockwait":
            self.lock_wait_done = True
            self.lock = None
            self._vc_progress(out)
